#include "qtl/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "qtl/error.hpp"

namespace qtl::data {

// --------------------------------------------------------------- Dataset

Dataset::Dataset(DatasetKind kind, Shape sample_shape, std::size_t class_count)
    : kind_(kind), sample_shape_(std::move(sample_shape)), sample_size_(shape_size(sample_shape_)),
      class_count_(class_count) {
  if (sample_shape_.empty() || sample_size_ == 0) throw ShapeError("dataset sample shape must be non-empty");
  if (class_count_ == 0) throw ConfigError("dataset needs at least one class");
}

void Dataset::add(std::span<const double> input, std::size_t label) {
  if (input.size() != sample_size_) {
    throw ShapeError("sample of " + std::to_string(input.size()) + " values, dataset expects " +
                     to_string(sample_shape_));
  }
  if (label >= class_count_) {
    throw UsageError("label " + std::to_string(label) + " >= class count " + std::to_string(class_count_));
  }
  values_.insert(values_.end(), input.begin(), input.end());
  labels_.push_back(label);
}

std::span<const double> Dataset::input(std::size_t i) const {
  return std::span<const double>(values_).subspan(i * sample_size_, sample_size_);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  std::vector<double> out;
  out.reserve(indices.size() * sample_size_);
  for (auto i : indices) {
    const auto x = input(i);
    out.insert(out.end(), x.begin(), x.end());
  }
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::size_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels_[i]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d(kind_, sample_shape_, class_count_);
  d.normalization_ = normalization_;
  for (auto i : indices) d.add(input(i), labels_[i]);
  return d;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_count_, 0);
  for (auto l : labels_) ++counts[l];
  return counts;
}

// ------------------------------------------------------------------- IDX

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
  std::size_t payload_offset = 0;
};

IdxFile parse_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  IdxFile f;
  f.bytes = read_bytes(path);
  if (f.bytes.size() < 4) throw TruncatedFileError(path.string() + ": file shorter than IDX magic");
  const std::uint32_t magic = read_be32(f.bytes, 0);
  if (magic != expected_magic) {
    std::ostringstream msg;
    msg << path.string() << ": bad IDX magic 0x" << std::hex << magic << ", expected 0x" << expected_magic;
    throw BadMagicError(msg.str());
  }
  const std::size_t ndims = expected_magic & 0xFFU;
  f.payload_offset = 4 + 4 * ndims;
  if (f.bytes.size() < f.payload_offset) throw TruncatedFileError(path.string() + ": truncated IDX header");
  std::size_t payload = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    f.dims.push_back(read_be32(f.bytes, 4 + 4 * d));
    payload *= f.dims.back();
  }
  if (f.bytes.size() - f.payload_offset < payload) {
    throw TruncatedFileError(path.string() + ": payload has " + std::to_string(f.bytes.size() - f.payload_offset) +
                             " bytes, header declares " + std::to_string(payload));
  }
  return f;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  const IdxFile images = parse_idx(image_path, kIdxImageMagic);
  const IdxFile labels = parse_idx(label_path, kIdxLabelMagic);
  const std::size_t n = images.dims[0];
  if (labels.dims[0] != n) {
    throw CountMismatchError(std::to_string(n) + " images but " + std::to_string(labels.dims[0]) + " labels");
  }
  const std::size_t rows = images.dims[1];
  const std::size_t cols = images.dims[2];
  std::size_t classes = 1;
  for (std::size_t i = 0; i < n; ++i) {
    classes = std::max<std::size_t>(classes, std::size_t{labels.bytes[labels.payload_offset + i]} + 1);
  }
  Dataset d(DatasetKind::Image, {1, rows, cols}, classes);
  std::vector<double> pixels(rows * cols);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = images.payload_offset + i * rows * cols;
    for (std::size_t p = 0; p < pixels.size(); ++p) pixels[p] = images.bytes[base + p] / 255.0;
    d.add(pixels, labels.bytes[labels.payload_offset + i]);
  }
  d.set_normalization({.unit_scaled = true, .standardized = false, .mean = {}, .stddev = {}});
  return d;
}

void write_idx(const Dataset& dataset, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
  const Shape& s = dataset.sample_shape();
  if (s.size() != 3 || s[0] != 1) throw ShapeError("IDX export needs single-channel (1, H, W) samples");
  if (dataset.class_count() > 256) throw ConfigError("IDX labels are limited to 256 classes");
  std::ofstream img(image_path, std::ios::binary);
  std::ofstream lab(label_path, std::ios::binary);
  if (!img || !lab) throw DataError("cannot write IDX files");
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<std::uint32_t>(dataset.size()));
  write_be32(img, static_cast<std::uint32_t>(s[1]));
  write_be32(img, static_cast<std::uint32_t>(s[2]));
  write_be32(lab, kIdxLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.input(i)) {
      img.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    lab.put(static_cast<char>(static_cast<std::uint8_t>(dataset.label(i))));
  }
}

// ------------------------------------------------------------------- CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

Dataset load_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw UnknownHeaderError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 2 || header.back() != "label") {
    throw UnknownHeaderError(path.string() + ": header must be f0,...,fK,label");
  }
  const std::size_t width = header.size() - 1;
  for (std::size_t i = 0; i < width; ++i) {
    if (header[i] != "f" + std::to_string(i)) {
      throw UnknownHeaderError(path.string() + ": unexpected column '" + std::string(header[i]) + "'");
    }
  }
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw RaggedRowError(path.string() + ":" + std::to_string(line_no) + ": " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()));
    }
    std::vector<double> row(width);
    for (std::size_t i = 0; i < width; ++i) {
      const auto f = fields[i];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), row[i]);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty() || !std::isfinite(row[i])) {
        throw NonNumericFieldError(path.string() + ":" + std::to_string(line_no) + ": field " + std::to_string(i) +
                                   " '" + std::string(f) + "' is not a finite number");
      }
    }
    std::size_t label = 0;
    const auto lf = fields.back();
    const auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size() || lf.empty()) {
      throw NonNumericFieldError(path.string() + ":" + std::to_string(line_no) + ": label '" + std::string(lf) +
                                 "' is not a non-negative integer");
    }
    rows.push_back(std::move(row));
    labels.push_back(label);
  }
  std::size_t classes = 1;
  for (auto l : labels) classes = std::max(classes, l + 1);
  Dataset d(DatasetKind::FeatureVector, {width}, classes);
  for (std::size_t i = 0; i < rows.size(); ++i) d.add(rows[i], labels[i]);
  return d;
}

void write_feature_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t width = dataset.sample_size();
  for (std::size_t i = 0; i < width; ++i) out << 'f' << i << ',';
  out << "label\n";
  std::array<char, 64> buf{};
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (double v : dataset.input(r)) {
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
      out.write(buf.data(), res.ptr - buf.data());
      out << ',';
    }
    out << dataset.label(r) << '\n';
  }
}

// ------------------------------------------------------------- Synthetic

namespace {

struct Point {
  double x, y;
};

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

/// Distance from p (shape-local coordinates, centre at origin) to the
/// stroke set of a pattern; 0 inside filled shapes.
double pattern_distance(SynthTask task, std::size_t pattern, Point p, double scale) {
  const double a = scale;
  const double d = 0.7 * scale;
  const double r = std::hypot(p.x, p.y);
  auto seg = [&](double x0, double y0, double x1, double y1) { return segment_distance(p, {x0, y0}, {x1, y1}); };
  auto box = [&](double half) { return std::max(std::abs(p.x), std::abs(p.y)) - half; };
  if (task == SynthTask::Source) {
    switch (pattern) {
      case 0: return seg(-a, 0, a, 0);
      case 1: return seg(0, -a, 0, a);
      case 2: return seg(-d, -d, d, d);
      case 3: return seg(-d, d, d, -d);
      case 4: return std::max(0.0, r - 0.55 * a);
      default: return std::max(0.0, box(0.5 * a));
    }
  }
  switch (pattern) {
    case 0: return std::abs(r - 0.75 * a);
    case 1: return std::min(seg(-a, 0, a, 0), seg(0, -a, 0, a));
    case 2: return std::min(seg(-d, -d, d, d), seg(-d, d, d, -d));
    case 3: return std::min(seg(-d, -d, -d, d), seg(-d, d, d, d));
    case 4: return std::min(seg(-d, -d, d, -d), seg(0, -d, 0, d));
    default: return std::abs(box(0.7 * a));
  }
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.classes == 0 || spec.classes > kSynthPatterns) {
    throw ConfigError("synthetic class count must be in [1, " + std::to_string(kSynthPatterns) + "]");
  }
  if (spec.image_size < 8) throw ConfigError("synthetic image size must be at least 8");
  if (!(spec.difficulty >= 0.0)) throw ConfigError("difficulty must be non-negative");
  const std::size_t S = spec.image_size;
  const double diff = spec.difficulty;
  const double bounded = std::min(diff, 1.0);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto sym = [&](double half) { return (2.0 * unit(rng) - 1.0) * half; };

  Dataset d(DatasetKind::Image, {1, S, S}, spec.classes);
  std::vector<double> img(S * S);
  const double half_width = 0.9;
  const double base_scale = 0.35 * static_cast<double>(S);
  for (std::size_t i = 0; i < spec.samples_per_class * spec.classes; ++i) {
    const std::size_t label = i % spec.classes;
    const double cx = (static_cast<double>(S) - 1.0) / 2.0 + sym(1.5 * diff);
    const double cy = (static_cast<double>(S) - 1.0) / 2.0 + sym(1.5 * diff);
    const double scale = base_scale * (1.0 + sym(0.2 * bounded));
    const double angle = sym(0.2 * bounded);
    const double gain = 1.0 - 0.4 * bounded * unit(rng);
    const double background = 0.15 * bounded * unit(rng);
    const double noise = 0.2 * bounded;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double px = static_cast<double>(x) - cx;
        const double py = static_cast<double>(y) - cy;
        const Point local{ca * px + sa * py, -sa * px + ca * py};
        const double dist = pattern_distance(spec.task, label, local, scale);
        const double stroke = std::clamp(half_width + 0.5 - dist, 0.0, 1.0);
        double v = background + gain * stroke;
        if (noise > 0.0) v += noise * normal(rng);
        img[y * S + x] = std::clamp(v, 0.0, 1.0);
      }
    }
    d.add(img, label);
  }
  d.set_normalization({.unit_scaled = true, .standardized = false, .mean = {}, .stddev = {}});
  return d;
}

// ----------------------------------------------------------------- Split

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const Dataset& dataset,
                                                                            double train_fraction,
                                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie strictly between 0 and 1");
  }
  std::vector<std::vector<std::size_t>> by_class(dataset.class_count());
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.label(i)].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  const auto [train, test] = split_indices(dataset, train_fraction, seed);
  return {dataset.subset(train), dataset.subset(test)};
}

void standardize(Dataset& target, const Dataset& reference) {
  if (target.normalization().standardized) throw UsageError("dataset is already standardized");
  if (reference.empty() || reference.sample_shape() != target.sample_shape()) {
    throw ShapeError("standardization reference must be non-empty with the same sample shape");
  }
  const std::size_t channels = target.kind() == DatasetKind::Image ? target.sample_shape()[0] : target.sample_size();
  const std::size_t per_channel = target.sample_size() / channels;
  std::vector<double> mean(channels, 0.0), var(channels, 0.0);
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto x = reference.input(i);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t s = 0; s < per_channel; ++s) mean[c] += x[c * per_channel + s];
  }
  const auto count = static_cast<double>(reference.size() * per_channel);
  for (auto& m : mean) m /= count;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const auto x = reference.input(i);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t s = 0; s < per_channel; ++s) {
        const double dlt = x[c * per_channel + s] - mean[c];
        var[c] += dlt * dlt;
      }
  }
  std::vector<double> stddev(channels);
  for (std::size_t c = 0; c < channels; ++c) stddev[c] = std::max(std::sqrt(var[c] / count), 1e-12);
  Dataset out(target.kind(), target.sample_shape(), target.class_count());
  std::vector<double> buf(target.sample_size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto x = target.input(i);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t s = 0; s < per_channel; ++s)
        buf[c * per_channel + s] = (x[c * per_channel + s] - mean[c]) / stddev[c];
    out.add(buf, target.label(i));
  }
  Normalization n = target.normalization();
  n.standardized = true;
  n.mean = std::move(mean);
  n.stddev = std::move(stddev);
  out.set_normalization(std::move(n));
  target = std::move(out);
}

}  // namespace qtl::data
