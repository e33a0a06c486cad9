#include "more/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "more/errors.hpp"

namespace more {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'R', 'E'};
constexpr std::uint32_t kVersion = 1;

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::size_t offset() const { return off_; }

  void raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError("truncated checkpoint", off_);
    off_ += n;
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::size_t off_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<char*>(&v), 8); }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValueError("save_checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, ckpt.step);
  put_u64(out, ckpt.seed);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_echo.size()));
  out.write(ckpt.config_echo.data(), static_cast<std::streamsize>(ckpt.config_echo.size()));
  put_u64(out, ckpt.params.count());
  for (const auto& [name, t] : ckpt.params.items()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.ndim());
    for (std::size_t d : t.shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw ValueError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path, 0);
  Reader r(in);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError("unsupported version " + std::to_string(version), 4);
  Checkpoint ckpt;
  ckpt.step = r.u64();
  ckpt.seed = r.u64();
  const std::uint32_t cfg_len = r.u32();
  ckpt.config_echo = r.str(cfg_len);
  const std::uint64_t count = r.u64();
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::size_t name_at = r.offset();
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) throw CheckpointError("implausible name length", name_at);
    std::string name = r.str(name_len);
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw CheckpointError("implausible tensor rank", name_at);
    Shape shape(rank);
    std::size_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape[d] = r.u64();
      n *= shape[d];
    }
    if (n > (1ull << 30)) throw CheckpointError("implausible tensor size", name_at);
    std::vector<double> values(n);
    r.raw(values.data(), n * sizeof(double));
    ckpt.params.add(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace more
