#include "updp/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <type_traits>

namespace updp {

namespace {

constexpr char kMagic[4] = {'U', 'P', 'C', 'K'};

class ByteWriter {
 public:
  void raw(std::span<const char> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  template <typename Real>
  void tensor(std::size_t rows, std::size_t cols, std::span<const Real> values) {
    u64(rows);
    u64(cols);
    for (const Real v : values) f64(static_cast<double>(v));
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  template <typename Real>
  Matrix<Real> matrix() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (cols != 0 && rows > (bytes_.size() - pos_) / 8 / cols) {
      throw Error(ErrorCode::TruncatedFile, "checkpoint tensor exceeds the file size");
    }
    std::vector<Real> values(static_cast<std::size_t>(rows * cols));
    for (Real& v : values) v = static_cast<Real>(f64());
    return Matrix<Real>(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols),
                        std::move(values));
  }

  template <typename Real>
  std::vector<Real> vector() {
    return matrix<Real>().data();
  }

  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::TruncatedFile, "checkpoint ends unexpectedly");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename Real>
void write_matrix(ByteWriter& w, const Matrix<Real>& m) {
  w.tensor<Real>(m.rows(), m.cols(), m.values());
}

template <typename Real>
void write_head(ByteWriter& w, const MlpHead<Real>& head) {
  write_matrix(w, head.w1);
  w.tensor<Real>(1, head.b1.size(), head.b1);
  write_matrix(w, head.w2);
  w.tensor<Real>(1, head.b2.size(), head.b2);
}

template <typename Real>
MlpHead<Real> read_head(ByteReader& r) {
  MlpHead<Real> head;
  head.w1 = r.matrix<Real>();
  head.b1 = r.vector<Real>();
  head.w2 = r.matrix<Real>();
  head.b2 = r.vector<Real>();
  if (head.b1.size() != head.w1.rows() || head.w2.cols() != head.w1.rows() ||
      head.b2.size() != head.w2.rows()) {
    throw Error(ErrorCode::DimMismatch, "checkpoint head shapes are inconsistent");
  }
  return head;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_header(ByteReader& r, std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "missing UPCK magic");
  }
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint version " + std::to_string(version) + " is not supported");
  }
}

}  // namespace

template <typename Real>
std::vector<std::uint8_t> encode_checkpoint(const ModelState<Real>& model) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.u8(std::is_same_v<Real, float> ? 0 : 1);
  w.u64(model.rng_seed);
  const ModelConfig& c = model.config;
  w.u64(c.fuser_seed);
  for (const std::size_t v :
       {c.d_in, c.d_w, c.d_h, c.d_z, c.d_hidden, c.context_length, c.num_clusters}) {
    w.u64(v);
  }
  w.u64(model.fuser.seed());
  write_matrix(w, model.prompt.vectors);
  const FuserWeights<Real>& fw = model.fuser.weights();
  for (const Matrix<Real>* m : {&fw.query, &fw.key, &fw.value, &fw.output, &fw.residual}) {
    write_matrix(w, *m);
  }
  write_head(w, model.instance_head);
  write_head(w, model.cluster_head);
  return w.take();
}

template <typename Real>
ModelState<Real> decode_checkpoint(std::span<const std::uint8_t> bytes,
                                   std::optional<std::size_t> expected_d_in) {
  ByteReader r(bytes);
  check_header(r, bytes);
  const std::uint8_t precision = r.u8();
  if (precision > 1) throw Error(ErrorCode::BadMagic, "unknown precision tag");
  const std::uint64_t rng_seed = r.u64();

  ModelConfig c;
  c.fuser_seed = r.u64();
  for (std::size_t* field : {&c.d_in, &c.d_w, &c.d_h, &c.d_z, &c.d_hidden, &c.context_length,
                             &c.num_clusters}) {
    *field = static_cast<std::size_t>(r.u64());
  }
  const std::uint64_t fuser_seed = r.u64();
  PromptContext<Real> prompt{r.matrix<Real>()};
  FuserWeights<Real> fw;
  for (Matrix<Real>* m : {&fw.query, &fw.key, &fw.value, &fw.output, &fw.residual}) {
    *m = r.matrix<Real>();
  }
  MlpHead<Real> instance_head = read_head<Real>(r);
  MlpHead<Real> cluster_head = read_head<Real>(r);
  if (!r.at_end()) throw Error(ErrorCode::TruncatedFile, "checkpoint has trailing bytes");

  if (expected_d_in && *expected_d_in != c.d_in) {
    throw Error(ErrorCode::DimMismatch, "checkpoint d_in " + std::to_string(c.d_in) +
                                            " differs from expected " +
                                            std::to_string(*expected_d_in));
  }
  FrozenFuser<Real> fuser = FrozenFuser<Real>::from_weights(fuser_seed, std::move(fw));
  const bool consistent =
      fuser.d_in() == c.d_in && fuser.d_w() == c.d_w && fuser.d_h() == c.d_h &&
      prompt.length() == c.context_length && prompt.width() == c.d_w &&
      instance_head.in_width() == c.d_h && instance_head.out_width() == c.d_z &&
      cluster_head.in_width() == c.d_h && cluster_head.out_width() == c.num_clusters;
  if (!consistent) {
    throw Error(ErrorCode::DimMismatch, "checkpoint tensors disagree with its config");
  }
  return ModelState<Real>{c,
                          std::move(prompt),
                          std::move(fuser),
                          std::move(instance_head),
                          std::move(cluster_head),
                          rng_seed};
}

template <typename Real>
void save_checkpoint(const ModelState<Real>& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

template <typename Real>
ModelState<Real> load_checkpoint(const std::filesystem::path& path,
                                 std::optional<std::size_t> expected_d_in) {
  return decode_checkpoint<Real>(read_file(path), expected_d_in);
}

Precision checkpoint_precision(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  ByteReader r(bytes);
  check_header(r, bytes);
  return r.u8() == 0 ? Precision::F32 : Precision::F64;
}

#define UPDP_INSTANTIATE(Real)                                                              \
  template std::vector<std::uint8_t> encode_checkpoint(const ModelState<Real>&);            \
  template ModelState<Real> decode_checkpoint(std::span<const std::uint8_t>,                \
                                              std::optional<std::size_t>);                  \
  template void save_checkpoint(const ModelState<Real>&, const std::filesystem::path&);     \
  template ModelState<Real> load_checkpoint(const std::filesystem::path&,                   \
                                            std::optional<std::size_t>);

UPDP_INSTANTIATE(float)
UPDP_INSTANTIATE(double)

#undef UPDP_INSTANTIATE

}  // namespace updp
