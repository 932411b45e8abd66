// Copyright 2026 The phirtn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "phirtn/serialization.hpp"

#include <gtest/gtest.h>

#include "phirtn/unigram_model.hpp"

namespace phirtn {
namespace {

TEST(SerializationTest, EmptyContainerIsHeaderOnly) {
  Container c(ModelKind::kUnigram);
  EXPECT_EQ(c.byte_size(), kContainerOverhead);
  EXPECT_EQ(c.serialize().size(), kContainerOverhead);
}

TEST(SerializationTest, RoundTrip) {
  Container c(ModelKind::kPhiRtn);
  c.add(7, {1, 2, 3});
  c.add(9, {});
  const auto bytes = c.serialize();
  EXPECT_EQ(bytes.size(), c.byte_size());
  const Container d = Container::parse(bytes);
  EXPECT_EQ(d.kind(), ModelKind::kPhiRtn);
  ASSERT_EQ(d.sections().size(), 2u);
  EXPECT_EQ(d.get(7).bytes, (std::vector<std::uint8_t>{1, 2, 3}));
  EXPECT_TRUE(d.get(9).bytes.empty());
  EXPECT_THROW(d.get(8), Error);
  EXPECT_EQ(d.serialize(), bytes);
}

TEST(SerializationTest, RejectsCorruption) {
  Container c(ModelKind::kBackoffNgram);
  c.add(1, {10, 20, 30, 40});
  auto bytes = c.serialize();

  auto flipped = bytes;
  flipped[flipped.size() - 6] ^= 0x01;
  EXPECT_THROW(Container::parse(flipped), Error);

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(Container::parse(magic), Error);

  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(Container::parse(version), Error);

  auto kind = bytes;
  kind[6] = 77;
  EXPECT_THROW(Container::parse(kind), Error);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(Container::parse(truncated), Error);

  // A section count far beyond the payload must not allocate.
  auto count = bytes;
  count[7] = 0xff;
  count[8] = 0xff;
  count[9] = 0xff;
  EXPECT_THROW(Container::parse(count), Error);
}

TEST(SerializationTest, VocabularyRoundTrip) {
  Vocabulary v("$slot");
  v.insert("alpha");
  v.insert("beta");
  EXPECT_EQ(decode_vocabulary(encode_vocabulary(v)), v);
}

TEST(SerializationTest, SameModelSameBytes) {
  Vocabulary v;
  v.insert("a");
  const auto m = UnigramModel::uniform(v);
  EXPECT_EQ(m.to_container().serialize(), m.to_container().serialize());
  EXPECT_EQ(m.to_container().byte_size(), m.to_container().byte_size());
}

TEST(SerializationTest, UnigramRoundTripIsExact) {
  Vocabulary v;
  v.insert("a");
  v.insert("b");
  const UnigramModel m(v, {0.3, 0.1, 0.0, 0.0, 0.2, 0.4});
  const auto back = UnigramModel::from_container(
      Container::parse(m.to_container().serialize()));
  for (TokenId t = 0; t < v.size(); ++t) {
    EXPECT_EQ(back.logprob(t), m.logprob(t));
  }
}

TEST(SerializationTest, Crc32KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(s.data()),
                               s.size())),
            0xCBF43926u);
}

}  // namespace
}  // namespace phirtn
