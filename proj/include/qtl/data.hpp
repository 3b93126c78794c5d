#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qtl/tensor.hpp"

namespace qtl::data {

enum class DatasetKind { Image, FeatureVector };

/// Transform already applied to the stored inputs.
struct Normalization {
  bool unit_scaled = false;   ///< raw bytes divided by 255
  bool standardized = false;  ///< per-channel (x - mean) / stddev
  std::vector<double> mean;
  std::vector<double> stddev;

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Labelled samples of one homogeneous input shape, stored contiguously.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetKind kind, Shape sample_shape, std::size_t class_count);

  /// Appends one sample; throws ShapeError or UsageError on mismatch.
  void add(std::span<const double> input, std::size_t label);

  [[nodiscard]] DatasetKind kind() const { return kind_; }
  [[nodiscard]] const Shape& sample_shape() const { return sample_shape_; }
  [[nodiscard]] std::size_t sample_size() const { return sample_size_; }
  [[nodiscard]] std::size_t class_count() const { return class_count_; }
  [[nodiscard]] std::size_t size() const { return labels_.size(); }
  [[nodiscard]] bool empty() const { return labels_.empty(); }

  [[nodiscard]] std::span<const double> input(std::size_t i) const;
  [[nodiscard]] std::size_t label(std::size_t i) const { return labels_[i]; }
  [[nodiscard]] const std::vector<std::size_t>& labels() const { return labels_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }

  /// Inputs of the listed samples as a (B, sample_shape...) tensor.
  [[nodiscard]] Tensor batch(std::span<const std::size_t> indices) const;
  [[nodiscard]] std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;
  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;

  [[nodiscard]] std::vector<std::size_t> class_counts() const;

  [[nodiscard]] const Normalization& normalization() const { return normalization_; }
  void set_normalization(Normalization n) { normalization_ = std::move(n); }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  DatasetKind kind_ = DatasetKind::Image;
  Shape sample_shape_;
  std::size_t sample_size_ = 0;
  std::size_t class_count_ = 0;
  std::vector<double> values_;
  std::vector<std::size_t> labels_;
  Normalization normalization_;
};

// IDX (big-endian, 0x00000803 images / 0x00000801 labels).

/// Loads an image/label IDX pair; pixels are scaled to [0, 1]. Throws
/// BadMagicError, TruncatedFileError or CountMismatchError.
Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

/// Writes single-channel image samples as an IDX pair. Pixels are stored
/// as round(255 * x).
void write_idx(const Dataset& dataset, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

// Feature CSV: header `f0,...,fK,label`, one sample per LF-terminated row.

Dataset load_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const Dataset& dataset, const std::filesystem::path& path);

// Synthetic images.

enum class SynthTask {
  /// single strokes: horizontal, vertical, diagonal, anti-diagonal bars,
  /// disc, square
  Source,
  /// stroke compositions: ring, plus, cross, corner, T-junction, frame
  Target,
};

struct SynthSpec {
  std::size_t classes = 2;
  std::size_t samples_per_class = 100;
  std::size_t image_size = 16;
  std::uint64_t seed = 0;
  /// 0 renders clean centred shapes; larger values add position, scale and
  /// contrast jitter plus Gaussian pixel noise.
  double difficulty = 0.0;
  SynthTask task = SynthTask::Target;
};

/// Max class count supported by each task family.
inline constexpr std::size_t kSynthPatterns = 6;

/// Deterministic per seed. Samples are ordered class-interleaved.
Dataset synth_generate(const SynthSpec& spec);

/// Stratified, seeded split. Per class, round(train_fraction * n_c)
/// samples go to the train side. Throws ConfigError unless
/// 0 < train_fraction < 1.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

/// Same split as index lists into `dataset`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const Dataset& dataset,
                                                                            double train_fraction,
                                                                            std::uint64_t seed);

/// Per-channel standardization with statistics from `reference`, applied to
/// `target`. Throws UsageError if `target` is already standardized.
void standardize(Dataset& target, const Dataset& reference);

}  // namespace qtl::data
