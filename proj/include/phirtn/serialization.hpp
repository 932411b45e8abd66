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
//
// Binary model container.
//
// Layout, all integers little-endian:
//
//   "PRLM"            4 bytes magic
//   version           u16
//   kind              u8   (0 unigram, 1 backoff n-gram, 2 phi-rtn)
//   section count     u32
//   sections          { tag u32, length u64, bytes[length] } *
//   crc32             u32  over every byte of the section area
//
// Doubles are stored as their IEEE-754 bit patterns so a load reproduces
// scores bit for bit.

#ifndef PHIRTN_SERIALIZATION_HPP_
#define PHIRTN_SERIALIZATION_HPP_

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phirtn/error.hpp"
#include "phirtn/vocabulary.hpp"

namespace phirtn {

enum class ModelKind : std::uint8_t {
  kUnigram = 0,
  kBackoffNgram = 1,
  kPhiRtn = 2,
};

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::string_view kMagic = "PRLM";
// magic + version + kind + section count + crc
inline constexpr std::size_t kContainerOverhead = 4 + 2 + 1 + 4 + 4;
inline constexpr std::size_t kSectionOverhead = 4 + 8;

// Section tags. Vocabulary is shared by every kind.
namespace section {
inline constexpr std::uint32_t kVocabulary = 1;
inline constexpr std::uint32_t kUnigramTable = 2;
inline constexpr std::uint32_t kNgramOrders = 10;
inline constexpr std::uint32_t kTemplateTrie = 20;
inline constexpr std::uint32_t kEntityNgrams = 21;
inline constexpr std::uint32_t kPhiWeights = 22;
inline constexpr std::uint32_t kMarginalSums = 23;
inline constexpr std::uint32_t kPhiRtnParams = 24;
}  // namespace section

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { Put(v); }
  void u32(std::uint32_t v) { Put(v); }
  void u64(std::uint64_t v) { Put(v); }
  void i32(std::int32_t v) { Put(static_cast<std::uint32_t>(v)); }
  void f64(double v) { Put(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::span<const std::uint8_t> b) {
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }

  std::vector<std::uint8_t>& bytes() { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  template <class U>
  void Put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return Get<std::uint8_t>(); }
  std::uint16_t u16() { return Get<std::uint16_t>(); }
  std::uint32_t u32() { return Get<std::uint32_t>(); }
  std::uint64_t u64() { return Get<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(Get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(Get<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    Need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

  // Element counts read from the stream must fit in what is left, so a
  // corrupt count cannot trigger a huge allocation.
  std::uint32_t count(std::size_t min_element_bytes) {
    const std::uint32_t n = u32();
    if (min_element_bytes > 0 &&
        n > (bytes_.size() - pos_) / min_element_bytes) {
      throw Error("model file: element count exceeds section size");
    }
    return n;
  }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("model file: truncated data");
  }
  template <class U>
  U Get() {
    Need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

struct Section {
  std::uint32_t tag = 0;
  std::vector<std::uint8_t> bytes;
};

class Container {
 public:
  Container() = default;
  explicit Container(ModelKind kind) : kind_(kind) {}

  ModelKind kind() const { return kind_; }
  const std::vector<Section>& sections() const { return sections_; }

  void add(std::uint32_t tag, std::vector<std::uint8_t> bytes) {
    sections_.push_back({tag, std::move(bytes)});
  }

  const Section& get(std::uint32_t tag) const {
    for (const auto& s : sections_) {
      if (s.tag == tag) return s;
    }
    throw Error("model file: missing section " + std::to_string(tag));
  }

  std::size_t byte_size() const {
    std::size_t n = kContainerOverhead;
    for (const auto& s : sections_) n += kSectionOverhead + s.bytes.size();
    return n;
  }

  std::vector<std::uint8_t> serialize() const {
    ByteWriter w;
    w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic.data()),
                    kMagic.size()));
    w.u16(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(kind_));
    w.u32(static_cast<std::uint32_t>(sections_.size()));
    const std::size_t body = w.bytes().size();
    for (const auto& s : sections_) {
      w.u32(s.tag);
      w.u64(s.bytes.size());
      w.raw(s.bytes);
    }
    w.u32(crc32_of(std::span(w.bytes()).subspan(body)));
    return w.take();
  }

  static Container parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kContainerOverhead ||
        std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
      throw Error("model file: bad magic");
    }
    ByteReader r(bytes.first(bytes.size() - 4));
    r.take(4);
    if (const auto v = r.u16(); v != kFormatVersion) {
      throw Error("model file: unsupported version " + std::to_string(v));
    }
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(ModelKind::kPhiRtn)) {
      throw Error("model file: unknown model kind " + std::to_string(kind));
    }
    Container c(static_cast<ModelKind>(kind));
    const std::uint32_t n = r.count(kSectionOverhead);
    const std::size_t body = r.position();
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t tag = r.u32();
      const std::uint64_t len = r.u64();
      auto b = r.take(static_cast<std::size_t>(len));
      c.add(tag, std::vector<std::uint8_t>(b.begin(), b.end()));
    }
    if (!r.done()) throw Error("model file: trailing bytes");
    ByteReader tail(bytes.last(4));
    const std::uint32_t crc = tail.u32();
    if (crc != crc32_of(bytes.subspan(body, bytes.size() - 4 - body))) {
      throw Error("model file: CRC mismatch");
    }
    return c;
  }

 private:
  ModelKind kind_ = ModelKind::kUnigram;
  std::vector<Section> sections_;
};

inline std::vector<std::uint8_t> encode_vocabulary(const Vocabulary& vocab) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& word : vocab.words()) w.str(word);
  return w.take();
}

inline Vocabulary decode_vocabulary(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::uint32_t n = r.count(4);
  if (n < Vocabulary::kFirstWord) throw Error("model file: short vocabulary");
  std::vector<std::string> words(n);
  for (auto& w : words) w = r.str();
  if (words[Vocabulary::kEos] != Vocabulary::kEosWord ||
      words[Vocabulary::kUnk] != Vocabulary::kUnkWord ||
      words[Vocabulary::kBos] != Vocabulary::kBosWord) {
    throw Error("model file: reserved tokens out of place");
  }
  Vocabulary vocab(words[Vocabulary::kNonterminal]);
  for (std::uint32_t i = Vocabulary::kFirstWord; i < n; ++i) {
    if (vocab.insert(words[i]) != i) {
      throw Error("model file: duplicate vocabulary entry");
    }
  }
  return vocab;
}

inline void write_file(const std::string& path,
                       std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: '" + path + "'");
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace phirtn

#endif  // PHIRTN_SERIALIZATION_HPP_
