#include "aflab/compute/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aflab/errors.h"

namespace aflab {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void U32(std::uint32_t v) { Raw(&v, sizeof(v)); }
  void U64(std::uint64_t v) { Raw(&v, sizeof(v)); }
  void Str(const std::string& s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Raw(s.data(), s.size());
  }
  void Raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t U32() {
    std::uint32_t v;
    Raw(&v, sizeof(v));
    return v;
  }
  std::uint64_t U64() {
    std::uint64_t v;
    Raw(&v, sizeof(v));
    return v;
  }
  std::string Str() {
    const std::uint32_t n = U32();
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void Raw(void* p, std::size_t n) {
    Need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::Find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void Checkpoint::AddParameters(const ParameterList& params) {
  for (const Parameter* p : params) {
    bool replaced = false;
    for (auto& [n, t] : tensors) {
      if (n == p->name) {
        t = p->value;
        replaced = true;
      }
    }
    if (!replaced) tensors.emplace_back(p->name, p->value);
  }
}

void Checkpoint::LoadInto(const ParameterList& params) const {
  for (Parameter* p : params) {
    const Tensor* t = Find(p->name);
    if (t == nullptr) throw FormatError("checkpoint missing tensor '" + p->name + "'");
    if (!t->SameShape(p->value)) {
      throw FormatError("checkpoint tensor '" + p->name + "' has shape " + t->ShapeString() + ", expected " +
                        p->value.ShapeString());
    }
    p->value = *t;
  }
}

bool Checkpoint::HasPrefix(const std::string& prefix) const {
  for (const auto& [n, t] : tensors)
    if (n.rfind(prefix, 0) == 0) return true;
  return false;
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  Writer w;
  w.Raw(kCheckpointMagic, 5);
  w.U32(kCheckpointVersion);
  w.U32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.Str(k);
    w.Str(v);
  }
  w.U32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.Str(name);
    w.U64(static_cast<std::uint64_t>(t.rows()));
    w.U64(static_cast<std::uint64_t>(t.cols()));
    w.Raw(t.data().data(), t.size() * sizeof(double));
  }
  return w.Take();
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[5];
  r.Raw(magic, 5);
  if (std::memcmp(magic, kCheckpointMagic, 5) != 0) throw FormatError("not an AFLAB checkpoint (bad magic)");
  const std::uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  const std::uint32_t n_meta = r.U32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.Str();
    ckpt.metadata[k] = r.Str();
  }
  const std::uint32_t n_tensors = r.U32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.Str();
    const std::uint64_t rows = r.U64();
    const std::uint64_t cols = r.U64();
    if (rows > (1u << 30) || cols > (1u << 30)) throw FormatError("checkpoint tensor '" + name + "' too large");
    std::vector<double> data(rows * cols);
    r.Raw(data.data(), data.size() * sizeof(double));
    ckpt.tensors.emplace_back(std::move(name), Tensor(static_cast<int>(rows), static_cast<int>(cols), std::move(data)));
  }
  if (!r.AtEnd()) throw FormatError("checkpoint has trailing bytes");
  return ckpt;
}

void WriteCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = SerializeCheckpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return DeserializeCheckpoint(ss.str());
}

}  // namespace aflab
