#include "updp/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "updp/random.hpp"

namespace updp {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 1 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[offset + static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

void EmbeddingDataset::validate() const {
  if (views == 0 || (count > 0 && dim == 0)) {
    throw Error(ErrorCode::InvalidDim, "dataset needs V >= 1 and D >= 1");
  }
  if (features.size() != static_cast<std::size_t>(count) * views * dim) {
    throw Error(ErrorCode::DimMismatch, "feature buffer length differs from N*V*D");
  }
  if (!all_finite<float>(features)) {
    throw Error(ErrorCode::NonFiniteFeature, "dataset contains NaN or Inf features");
  }
  if (labels) {
    if (labels->size() != count) {
      throw Error(ErrorCode::DimMismatch, "label count differs from N");
    }
    for (const std::int32_t y : *labels) {
      if (y < 0 || static_cast<std::uint32_t>(y) >= num_classes) {
        throw Error(ErrorCode::LabelOutOfRange,
                    "label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
      }
    }
  }
}

std::vector<std::uint8_t> encode_dataset(const EmbeddingDataset& dataset) {
  if (dataset.views == 0) {
    throw Error(ErrorCode::InvalidDim, "cannot save a dataset with zero views");
  }
  dataset.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(kHeaderBytes + dataset.features.size() * 4 + dataset.count * 4);
  put_u32(out, dataset.count);
  put_u32(out, dataset.dim);
  put_u32(out, dataset.views);
  out.push_back(dataset.has_labels() ? 1 : 0);
  put_u32(out, dataset.has_labels() ? dataset.num_classes : 0);
  for (const float f : dataset.features) put_u32(out, std::bit_cast<std::uint32_t>(f));
  if (dataset.labels) {
    for (const std::int32_t y : *dataset.labels) put_u32(out, static_cast<std::uint32_t>(y));
  }
  return out;
}

EmbeddingDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "missing EMB1 magic");
  }
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::TruncatedFile, "EMB1 header is truncated");
  }
  EmbeddingDataset ds;
  ds.count = get_u32(bytes, 4);
  ds.dim = get_u32(bytes, 8);
  ds.views = get_u32(bytes, 12);
  const std::uint8_t has_labels = bytes[16];
  const std::uint32_t classes = get_u32(bytes, 17);
  if (has_labels > 1) {
    throw Error(ErrorCode::BadMagic, "has_labels flag must be 0 or 1");
  }
  if (ds.views == 0) {
    throw Error(ErrorCode::InvalidDim, "EMB1 file declares zero views");
  }

  const std::uint64_t floats = std::uint64_t{ds.count} * ds.views * ds.dim;
  const std::uint64_t expected =
      kHeaderBytes + floats * 4 + (has_labels ? std::uint64_t{ds.count} * 4 : 0);
  if (bytes.size() < expected) {
    throw Error(ErrorCode::TruncatedFile, "EMB1 payload is shorter than its header declares");
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::TruncatedFile, "EMB1 file has trailing bytes after the payload");
  }

  std::size_t offset = kHeaderBytes;
  ds.features.resize(static_cast<std::size_t>(floats));
  for (float& f : ds.features) {
    f = std::bit_cast<float>(get_u32(bytes, offset));
    offset += 4;
  }
  if (has_labels) {
    ds.num_classes = classes;
    std::vector<std::int32_t> labels(ds.count);
    for (std::int32_t& y : labels) {
      y = static_cast<std::int32_t>(get_u32(bytes, offset));
      offset += 4;
    }
    ds.labels = std::move(labels);
  }
  ds.validate();
  return ds;
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

void save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

void SynthConfig::validate() const {
  if (num_classes == 0 || per_class == 0 || dim == 0 || subclusters == 0 || views == 0) {
    throw Error(ErrorCode::InvalidConfig, "synthetic dataset counts must be at least 1");
  }
  if (!(sigma > 0.0) || separation < 0.0 || subcluster_spread < 0.0 || view_sigma < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "sigma must be positive and spreads non-negative");
  }
}

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t dim, double radius) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
  } while (norm <= kNormEpsilon);
  for (double& x : v) x *= radius / norm;
  return v;
}

}  // namespace

EmbeddingDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synth"));
  const std::size_t dim = cfg.dim;

  std::vector<std::vector<double>> centers;  // [class * subclusters + sub]
  for (std::uint32_t k = 0; k < cfg.num_classes; ++k) {
    const std::vector<double> mean = random_direction(rng, dim, cfg.separation);
    for (std::uint32_t s = 0; s < cfg.subclusters; ++s) {
      std::vector<double> center = mean;
      if (cfg.subclusters > 1) {
        const std::vector<double> offset = random_direction(rng, dim, cfg.subcluster_spread);
        for (std::size_t d = 0; d < dim; ++d) center[d] += offset[d];
      }
      centers.push_back(std::move(center));
    }
  }

  EmbeddingDataset ds;
  ds.count = cfg.num_classes * cfg.per_class;
  ds.dim = cfg.dim;
  ds.views = cfg.views;
  ds.num_classes = cfg.num_classes;
  ds.features.reserve(static_cast<std::size_t>(ds.count) * ds.views * dim);
  std::vector<std::int32_t> labels;
  labels.reserve(ds.count);

  std::vector<double> point(dim);
  for (std::uint32_t k = 0; k < cfg.num_classes; ++k) {
    for (std::uint32_t i = 0; i < cfg.per_class; ++i) {
      const auto& center = centers[k * cfg.subclusters + i % cfg.subclusters];
      for (std::size_t d = 0; d < dim; ++d) point[d] = center[d] + cfg.sigma * rng.normal();
      for (std::uint32_t v = 0; v < cfg.views; ++v) {
        for (std::size_t d = 0; d < dim; ++d) {
          ds.features.push_back(static_cast<float>(point[d] + cfg.view_sigma * rng.normal()));
        }
      }
      labels.push_back(static_cast<std::int32_t>(k));
    }
  }
  ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

}  // namespace updp
