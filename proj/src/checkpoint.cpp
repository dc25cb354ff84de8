#include "ssnmt/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "ssnmt/io.hpp"

namespace ssnmt {
namespace {

constexpr char kMagic[8] = {'S', 'S', 'N', 'M', 'T', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error("checkpoint: truncated file");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  const auto& c = p.config();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint<std::uint32_t>(kCheckpointVersion);
  for (std::size_t v : {c.num_blocks, c.num_heads, c.d_model, c.d_ffn, c.max_positions})
    w.uint<std::uint64_t>(v);
  w.f64(c.dropout);
  w.uint<std::uint8_t>(c.tied_embeddings ? 1 : 0);
  w.uint<std::uint64_t>(p.src_vocab_size());
  w.uint<std::uint64_t>(p.tgt_vocab_size());
  w.uint<std::uint64_t>(ckpt.epoch);
  w.f64(ckpt.valid_bleu);
  w.uint<std::uint64_t>(p.entries().size());
  for (const auto& [name, t] : p.entries()) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.uint<std::uint64_t>(d);
    for (Real v : t.data()) w.f64(static_cast<double>(v));
  }
  return w.take();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error("checkpoint: bad magic");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported format version " + std::to_string(version));
  TransformerConfig c;
  c.num_blocks = r.uint<std::uint64_t>();
  c.num_heads = r.uint<std::uint64_t>();
  c.d_model = r.uint<std::uint64_t>();
  c.d_ffn = r.uint<std::uint64_t>();
  c.max_positions = r.uint<std::uint64_t>();
  c.dropout = r.f64();
  c.tied_embeddings = r.uint<std::uint8_t>() != 0;
  const auto src_vocab = r.uint<std::uint64_t>();
  const auto tgt_vocab = r.uint<std::uint64_t>();
  Checkpoint ckpt{TransformerParams(c, src_vocab, tgt_vocab), 0, 0.0};
  ckpt.epoch = r.uint<std::uint64_t>();
  ckpt.valid_bleu = r.f64();
  const auto count = r.uint<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.uint<std::uint32_t>(), '\0');
    r.bytes(name.data(), name.size());
    Shape shape(r.uint<std::uint32_t>());
    for (auto& d : shape) d = r.uint<std::uint64_t>();
    std::vector<Real> data(numel_of(shape));
    for (auto& v : data) v = static_cast<Real>(r.f64());
    ckpt.params.add(std::move(name), Tensor(std::move(shape), std::move(data)).set_requires_grad(true));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace ssnmt
