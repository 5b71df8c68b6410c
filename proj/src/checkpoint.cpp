#include "jsi/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "jsi/errors.hpp"

namespace jsi {
namespace {

constexpr char kMagic[4] = {'J', 'S', 'I', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string str() {
    const auto n = static_cast<std::size_t>(uint(4));
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string_view raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ConfigError("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const ParamBlock* Checkpoint::find(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const ParamBlock& Checkpoint::block(std::string_view name) const {
  if (const auto* b = find(name)) return *b;
  throw ConfigError("checkpoint has no block '" + std::string(name) + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);
  put_str(out, ckpt.kind);
  put_u32(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) {
    put_str(out, b.name);
    put_u64(out, b.values.size());
    for (double v : b.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(4) != std::string_view(kMagic, 4)) throw ConfigError("not a checkpoint (bad magic)");
  const auto version = r.uint(4);
  if (version != Checkpoint::kVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.str();
  const auto n = r.uint(4);
  for (std::uint64_t i = 0; i < n; ++i) {
    ParamBlock b;
    b.name = r.str();
    const auto count = r.uint(8);
    b.values.resize(static_cast<std::size_t>(count));
    for (auto& v : b.values) v = std::bit_cast<double>(r.uint(8));
    ckpt.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw ConfigError("trailing bytes after checkpoint");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  const auto bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace jsi
