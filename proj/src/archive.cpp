#include "mscib/archive.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "mscib/error.hpp"

namespace mscib {
namespace {

constexpr char kMagic[8] = {'M', 'S', 'C', 'I', 'B', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

enum : std::uint8_t { kTensor = 1, kString = 2, kInteger = 3 };

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_name(std::string& out, std::uint8_t kind, const std::string& name) {
  out.push_back(static_cast<char>(kind));
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const Eigen::MatrixXd& Archive::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("missing tensor '" + name + "'", 0);
  return it->second;
}

const std::string& Archive::string(const std::string& name) const {
  const auto it = strings.find(name);
  if (it == strings.end()) throw FormatError("missing string '" + name + "'", 0);
  return it->second;
}

std::int64_t Archive::integer(const std::string& name) const {
  const auto it = integers.find(name);
  if (it == integers.end()) throw FormatError("missing integer '" + name + "'", 0);
  return it->second;
}

std::string Archive::serialize() const {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size() + strings.size() + integers.size()));
  for (const auto& [name, t] : tensors) {
    put_name(out, kTensor, name);
    put_u64(out, static_cast<std::uint64_t>(t.rows()));
    put_u64(out, static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(t(i, j)));
  }
  for (const auto& [name, s] : strings) {
    put_name(out, kString, name);
    put_u64(out, s.size());
    out += s;
  }
  for (const auto& [name, v] : integers) {
    put_name(out, kInteger, name);
    put_u64(out, static_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a(out));
  return out;
}

Archive Archive::deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.str(sizeof kMagic, "magic") != std::string_view(kMagic, sizeof kMagic))
    throw FormatError("bad magic bytes; not a checkpoint file", 0);
  if (const auto v = in.u32("version"); v != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v), in.offset() - 4);
  const std::uint32_t count = in.u32("record count");
  Archive a;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::size_t record_start = in.offset();
    const std::uint8_t kind = in.u8("record kind");
    const std::uint32_t name_len = in.u32("name length");
    std::string name = in.str(name_len, "name");
    switch (kind) {
      case kTensor: {
        const std::uint64_t rows = in.u64("tensor rows");
        const std::uint64_t cols = in.u64("tensor cols");
        if (cols != 0 && rows > (bytes.size() / 8) / cols)
          throw FormatError("tensor '" + name + "' larger than file", record_start);
        in.need(rows * cols * 8, "tensor data");
        Eigen::MatrixXd t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < t.rows(); ++i)
          for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = std::bit_cast<double>(in.u64("tensor data"));
        a.tensors.emplace(std::move(name), std::move(t));
        break;
      }
      case kString: {
        const std::uint64_t len = in.u64("string length");
        a.strings.emplace(std::move(name), in.str(len, "string data"));
        break;
      }
      case kInteger:
        a.integers.emplace(std::move(name), static_cast<std::int64_t>(in.u64("integer")));
        break;
      default:
        throw FormatError("unknown record kind " + std::to_string(kind), record_start);
    }
  }
  const std::size_t body_end = in.offset();
  const std::uint64_t stored = in.u64("checksum");
  if (stored != fnv1a(std::string_view(bytes).substr(0, body_end)))
    throw FormatError("checksum mismatch", body_end);
  if (in.offset() != bytes.size()) throw FormatError("trailing bytes after checksum", in.offset());
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace mscib
