#include "avnet/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace avnet {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'N', 'W'};

class Writer {
 public:
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(U);
    return value;
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > bytes_.size() - pos_) {
      throw ArchiveError(std::string("weight archive truncated while reading ") + what + " (need " +
                         std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                         ", file has " + std::to_string(bytes_.size()) + ")");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

WeightArchive WeightArchive::from_store(const ParameterStore& store, std::string config_text) {
  WeightArchive archive;
  archive.config_text = std::move(config_text);
  for (const auto& e : store.entries()) {
    archive.tensors.push_back({e.name, e.trainable, e.tensor.to(DType::float32)});
  }
  return archive;
}

std::vector<std::uint8_t> encode_archive(const WeightArchive& archive) {
  Writer w;
  w.raw(kMagic, 4);
  w.uint<std::uint32_t>(kArchiveVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& item : archive.tensors) {
    if (item.name.size() > 0xFFFF) throw ArchiveError("tensor name too long: " + item.name);
    if (item.values.rank() > 0xFF) throw ArchiveError("tensor rank too large: " + item.name);
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(item.name.size()));
    w.raw(item.name.data(), item.name.size());
    w.uint<std::uint8_t>(item.trainable ? 1 : 0);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(item.values.rank()));
    for (auto d : item.values.shape().dims()) w.uint<std::uint64_t>(static_cast<std::uint64_t>(d));
    const Tensor f32 =
        item.values.dtype() == DType::float32 ? item.values : item.values.to(DType::float32);
    for (float v : f32.data<float>()) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(archive.config_text.size()));
  w.raw(archive.config_text.data(), archive.config_text.size());
  return w.take();
}

WeightArchive decode_archive(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw ArchiveError("not a weight archive (bad magic)");
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kArchiveVersion) {
    throw ArchiveError("unsupported weight archive version " + std::to_string(version));
  }
  const auto count = r.uint<std::uint32_t>("tensor count");

  WeightArchive archive;
  for (std::uint32_t t = 0; t < count; ++t) {
    WeightArchive::Item item;
    const auto name_len = r.uint<std::uint16_t>("name length");
    item.name = r.text(name_len, "tensor name");
    item.trainable = r.uint<std::uint8_t>("trainable flag") != 0;
    const auto rank = r.uint<std::uint8_t>("rank");
    std::vector<std::int64_t> dims;
    std::uint64_t numel = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = r.uint<std::uint64_t>("dimension");
      // Any dimension that cannot fit in the remaining bytes means a corrupt
      // or truncated header.
      if (d > r.remaining() || (d != 0 && numel > r.remaining() / d)) {
        throw ArchiveError("weight archive truncated: tensor '" + item.name +
                           "' declares more data than the file holds");
      }
      numel *= d;
      dims.push_back(static_cast<std::int64_t>(d));
    }
    const std::uint8_t* payload = r.take(numel * 4, "tensor payload");
    item.values = Tensor::zeros(Shape(dims), DType::float32);
    auto out = item.values.data<float>();
    for (std::uint64_t i = 0; i < numel; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[i * 4 + b]) << (8 * b);
      out[i] = std::bit_cast<float>(bits);
    }
    archive.tensors.push_back(std::move(item));
  }
  const auto config_len = r.uint<std::uint32_t>("config length");
  archive.config_text = r.text(config_len, "config text");
  if (r.remaining() != 0) {
    throw ArchiveError("weight archive has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return archive;
}

void write_archive(const WeightArchive& archive, const std::filesystem::path& path) {
  const auto bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

WeightArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

}  // namespace avnet
