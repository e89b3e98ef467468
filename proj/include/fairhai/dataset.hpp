/*
 * Copyright 2026 The FairHAI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRHAI_DATASET_HPP_
#define FAIRHAI_DATASET_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairhai/detail/common.hpp"
#include "fairhai/error.hpp"

namespace fairhai {

/// One case: feature vector, ground truth, cohort, and the annotators' labels.
struct Sample {
  std::uint64_t id = 0;
  std::vector<double> features;
  std::size_t label = 0;
  std::size_t attribute = 0;
  std::vector<std::size_t> annotations;

  bool operator==(const Sample&) const = default;
};

/// Feature, class, cohort, and annotator counts shared by every sample.
struct Shape {
  std::size_t features = 0;
  std::size_t classes = 2;
  std::size_t cohorts = 2;
  std::size_t annotators = 0;

  bool operator==(const Shape&) const = default;
};

struct Provenance {
  enum class Kind { ingested, synthetic };
  Kind kind = Kind::ingested;
  std::uint64_t seed = 0;
  std::string generator;  // benchmark name or "custom" for synthetic data

  bool operator==(const Provenance&) const = default;
};

/// Immutable, validated collection of samples.
class Dataset {
 public:
  Dataset(std::vector<Sample> samples, Shape shape, Provenance provenance = {})
      : samples_(std::move(samples)), shape_(shape), provenance_(std::move(provenance)) {
    validate();
  }

  std::size_t size() const { return samples_.size(); }
  const Shape& shape() const { return shape_; }
  const Provenance& provenance() const { return provenance_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  /// New dataset holding the given rows in order. Throws if a cohort would
  /// be left without samples.
  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<Sample> rows;
    rows.reserve(indices.size());
    for (std::size_t i : indices) rows.push_back(samples_.at(i));
    return Dataset(std::move(rows), shape_, provenance_);
  }

  /// Copy with the annotation lists replaced; used by expert simulation.
  Dataset with_annotations(std::vector<std::vector<std::size_t>> annotations,
                           std::size_t annotators) const {
    if (annotations.size() != samples_.size()) {
      throw ValidationError("annotation list count does not match sample count");
    }
    std::vector<Sample> rows = samples_;
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].annotations = std::move(annotations[i]);
    Shape s = shape_;
    s.annotators = annotators;
    return Dataset(std::move(rows), s, provenance_);
  }

  bool operator==(const Dataset&) const = default;

 private:
  void validate() const {
    if (samples_.empty()) throw ValidationError("dataset must contain at least one sample");
    if (shape_.classes < 2) throw ValidationError("dataset needs at least two classes");
    if (shape_.cohorts < 1) throw ValidationError("dataset needs at least one cohort");
    std::vector<bool> seen(shape_.cohorts, false);
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const Sample& s = samples_[i];
      if (s.features.size() != shape_.features) {
        throw ValidationError("sample " + std::to_string(i) + " has " +
                              std::to_string(s.features.size()) + " features, expected " +
                              std::to_string(shape_.features));
      }
      if (s.label >= shape_.classes) {
        throw ValidationError("sample " + std::to_string(i) + " label out of range");
      }
      if (s.attribute >= shape_.cohorts) {
        throw ValidationError("sample " + std::to_string(i) + " attribute out of range");
      }
      if (s.annotations.size() != shape_.annotators) {
        throw ValidationError("sample " + std::to_string(i) + " has " +
                              std::to_string(s.annotations.size()) + " annotations, expected " +
                              std::to_string(shape_.annotators));
      }
      for (std::size_t a : s.annotations) {
        if (a >= shape_.classes) {
          throw ValidationError("sample " + std::to_string(i) + " annotation out of range");
        }
      }
      seen[s.attribute] = true;
    }
    for (std::size_t a = 0; a < shape_.cohorts; ++a) {
      if (!seen[a]) throw ValidationError("cohort " + std::to_string(a) + " has no samples");
    }
  }

  std::vector<Sample> samples_;
  Shape shape_;
  Provenance provenance_;
};

// ---------------------------------------------------------------------------
// CSV: id, f0..f{F-1}, attribute, label, annot0..annot{M-1}

inline std::vector<std::string> csv_header(const Shape& shape) {
  std::vector<std::string> cols{"id"};
  for (std::size_t f = 0; f < shape.features; ++f) cols.push_back("f" + std::to_string(f));
  cols.push_back("attribute");
  cols.push_back("label");
  for (std::size_t m = 0; m < shape.annotators; ++m) cols.push_back("annot" + std::to_string(m));
  return cols;
}

inline void write_dataset_csv(const Dataset& d, std::ostream& out) {
  const auto header = csv_header(d.shape());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const Sample& s : d.samples()) {
    out << s.id;
    for (double v : s.features) out << ',' << detail::format_double(v);
    out << ',' << s.attribute << ',' << s.label;
    for (std::size_t a : s.annotations) out << ',' << a;
    out << '\n';
  }
}

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset_csv(d, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline Dataset load_dataset_csv(std::istream& in, const Shape& shape,
                                const std::string& source = "<stream>") {
  const auto expected = csv_header(shape);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(source + ": empty file, header row missing");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto got = detail::split_view(line, ',');
  for (std::size_t c = 0; c < std::max(got.size(), expected.size()); ++c) {
    if (c >= got.size()) {
      throw SchemaError(source + ": header is missing column '" + expected[c] + "'");
    }
    const std::string_view name = detail::trim(got[c]);
    if (c >= expected.size()) {
      throw SchemaError(source + ": unexpected extra column '" + std::string(name) + "'");
    }
    if (name != expected[c]) {
      throw SchemaError(source + ": header column " + std::to_string(c + 1) + " is '" +
                        std::string(name) + "', expected '" + expected[c] + "'");
    }
  }

  std::vector<Sample> samples;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = detail::split_view(line, ',');
    auto where = [&](std::size_t col) {
      return source + ": row " + std::to_string(row) + ", column '" + expected[col] + "'";
    };
    if (fields.size() < expected.size()) {
      throw SchemaError(source + ": row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, missing column '" +
                        expected[fields.size()] + "'");
    }
    if (fields.size() > expected.size()) {
      throw SchemaError(source + ": row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(expected.size()) + " (extra column)");
    }
    Sample s;
    std::size_t col = 0;
    std::size_t id = 0;
    if (!detail::parse_index(fields[col], id)) throw SchemaError(where(col) + ": id is not a non-negative integer");
    s.id = id;
    ++col;
    s.features.resize(shape.features);
    for (std::size_t f = 0; f < shape.features; ++f, ++col) {
      if (!detail::parse_double(fields[col], s.features[f]) || !std::isfinite(s.features[f])) {
        throw SchemaError(where(col) + ": non-numeric feature '" + std::string(fields[col]) + "'");
      }
    }
    if (!detail::parse_index(fields[col], s.attribute)) throw SchemaError(where(col) + ": not a non-negative integer");
    if (s.attribute >= shape.cohorts) {
      throw SchemaError(where(col) + ": attribute " + std::to_string(s.attribute) +
                        " out of range (A=" + std::to_string(shape.cohorts) + ")");
    }
    ++col;
    if (!detail::parse_index(fields[col], s.label)) throw SchemaError(where(col) + ": not a non-negative integer");
    if (s.label >= shape.classes) {
      throw SchemaError(where(col) + ": label " + std::to_string(s.label) +
                        " out of range (K=" + std::to_string(shape.classes) + ")");
    }
    ++col;
    s.annotations.resize(shape.annotators);
    for (std::size_t m = 0; m < shape.annotators; ++m, ++col) {
      if (!detail::parse_index(fields[col], s.annotations[m])) {
        throw SchemaError(where(col) + ": not a non-negative integer");
      }
      if (s.annotations[m] >= shape.classes) {
        throw SchemaError(where(col) + ": annotation out of range (K=" + std::to_string(shape.classes) + ")");
      }
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw SchemaError(source + ": no data rows");
  try {
    return Dataset(std::move(samples), shape, Provenance{Provenance::Kind::ingested, 0, source});
  } catch (const ValidationError& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

inline Dataset load_dataset_csv(const std::string& path, const Shape& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path + ": file not found or unreadable");
  return load_dataset_csv(in, shape, path);
}

/// Reads only the header to recover (F, M); K and A must come from elsewhere.
inline Shape sniff_csv_shape(const std::string& path, std::size_t classes, std::size_t cohorts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path + ": file not found or unreadable");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  Shape s{0, classes, cohorts, 0};
  for (std::string_view col : detail::split_view(line, ',')) {
    col = detail::trim(col);
    if (col.size() > 1 && col[0] == 'f' && std::isdigit(static_cast<unsigned char>(col[1]))) ++s.features;
    if (col.rfind("annot", 0) == 0) ++s.annotators;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian cohorts

struct CohortSpec {
  std::size_t count = 0;
  std::vector<double> priors;                    // K entries, summing to 1
  std::vector<std::vector<double>> class_means;  // K x F
};

struct SynthConfig {
  std::size_t features = 0;
  std::size_t classes = 2;
  std::vector<double> variances;  // shared diagonal, F entries
  std::vector<CohortSpec> cohorts;
  std::uint64_t seed = 0;
  std::string name = "custom";

  void validate() const {
    if (features == 0) throw ValidationError("synth: features must be positive");
    if (classes < 2) throw ValidationError("synth: need at least two classes");
    if (cohorts.empty()) throw ValidationError("synth: need at least one cohort");
    if (variances.size() != features) throw ValidationError("synth: variances must have F entries");
    for (double v : variances) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("synth: variances must be positive (degenerate config)");
    }
    for (std::size_t a = 0; a < cohorts.size(); ++a) {
      const CohortSpec& c = cohorts[a];
      const std::string tag = "synth: cohort " + std::to_string(a);
      if (c.count == 0) throw ValidationError(tag + " count must be positive");
      if (c.priors.size() != classes) throw ValidationError(tag + " priors must have K entries");
      double sum = 0.0;
      for (double p : c.priors) {
        if (p < 0.0) throw ValidationError(tag + " has a negative prior");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(tag + " priors must sum to 1");
      if (c.class_means.size() != classes) throw ValidationError(tag + " needs K class means");
      for (const auto& m : c.class_means) {
        if (m.size() != features) throw ValidationError(tag + " class mean must have F entries");
      }
    }
  }
};

/// Largest-remainder apportionment of `total` into parts proportional to `weights`.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = static_cast<double>(total) * weights[k] / wsum;
    out[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[k];
    rema.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[rema[i % rema.size()].second];
  return out;
}

/// Per-class sample counts a cohort spec produces.
inline std::vector<std::size_t> class_counts(const CohortSpec& c) {
  return apportion(c.count, c.priors);
}

inline Dataset synthesize_gaussian_cohorts(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Sample> samples;
  Rng rng = detail::make_rng({cfg.seed, 0x5e17});
  for (std::size_t a = 0; a < cfg.cohorts.size(); ++a) {
    const CohortSpec& c = cfg.cohorts[a];
    const auto counts = class_counts(c);
    for (std::size_t k = 0; k < cfg.classes; ++k) {
      for (std::size_t n = 0; n < counts[k]; ++n) {
        Sample s;
        s.label = k;
        s.attribute = a;
        s.features.resize(cfg.features);
        for (std::size_t f = 0; f < cfg.features; ++f) {
          s.features[f] = c.class_means[k][f] + std::sqrt(cfg.variances[f]) * detail::standard_normal(rng);
        }
        samples.push_back(std::move(s));
      }
    }
  }
  detail::shuffle(samples, rng);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].id = i;
  return Dataset(std::move(samples), Shape{cfg.features, cfg.classes, cfg.cohorts.size(), 0},
                 Provenance{Provenance::Kind::synthetic, cfg.seed, cfg.name});
}

enum class Benchmark { unbiased, biased, separable };

inline std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::unbiased: return "unbiased";
    case Benchmark::biased: return "biased";
    case Benchmark::separable: return "separable";
  }
  return "?";
}

inline Benchmark parse_benchmark(const std::string& s) {
  if (s == "unbiased") return Benchmark::unbiased;
  if (s == "biased") return Benchmark::biased;
  if (s == "separable") return Benchmark::separable;
  throw ValidationError("unknown synthetic benchmark '" + s + "'");
}

/// Class-1 mean offset of Mahalanobis length `separation` spread evenly over
/// dims [lo, hi).
inline std::vector<double> shifted_mean(std::size_t features, std::size_t lo, std::size_t hi,
                                        double separation) {
  std::vector<double> m(features, 0.0);
  const double per = separation / std::sqrt(static_cast<double>(hi - lo));
  for (std::size_t f = lo; f < hi; ++f) m[f] = per;
  return m;
}

/// Two-cohort binary benchmarks at unit variance.
///
/// biased: cohort 0 holds 60% of the samples (positive prior 0.4, class gap
/// 3 sigma along the first half of the features); cohort 1 holds 40% with a
/// 3x smaller positive prior and a 2 sigma gap along a partly different
/// direction. The last quarter of the features carries a cohort offset.
/// unbiased: both cohorts share one geometry (3 sigma gap, prior 0.4).
/// separable: like unbiased with a 4 sigma gap.
inline SynthConfig benchmark_config(Benchmark b, std::size_t n, std::size_t features,
                                    std::uint64_t seed) {
  if (features < 4) throw ValidationError("synthetic benchmarks need at least 4 features");
  if (n < 40) throw ValidationError("synthetic benchmarks need at least 40 samples");
  SynthConfig cfg;
  cfg.features = features;
  cfg.classes = 2;
  cfg.variances.assign(features, 1.0);
  cfg.seed = seed;
  cfg.name = to_string(b);
  const std::size_t half = features / 2;
  const std::size_t quarter = features / 4;
  const std::size_t marker = features - quarter;
  auto cohort = [&](std::size_t count, double pos_prior, std::size_t lo, std::size_t hi,
                    double sep, double offset) {
    CohortSpec c;
    c.count = count;
    c.priors = {1.0 - pos_prior, pos_prior};
    std::vector<double> m0(features, 0.0);
    std::vector<double> m1 = shifted_mean(features, lo, hi, sep);
    for (std::size_t f = marker; f < features; ++f) {
      m0[f] += offset;
      m1[f] += offset;
    }
    c.class_means = {m0, m1};
    return c;
  };
  switch (b) {
    case Benchmark::biased: {
      const std::size_t n0 = (n * 3) / 5;
      cfg.cohorts.push_back(cohort(n0, 0.4, 0, half, 3.0, -1.0));
      cfg.cohorts.push_back(cohort(n - n0, 0.4 / 3.0, quarter, quarter + half, 2.0, 1.0));
      break;
    }
    case Benchmark::unbiased:
    case Benchmark::separable: {
      const double sep = b == Benchmark::separable ? 4.0 : 3.0;
      const std::size_t n0 = n / 2;
      cfg.cohorts.push_back(cohort(n0, 0.4, 0, half, sep, 0.0));
      cfg.cohorts.push_back(cohort(n - n0, 0.4, 0, half, sep, 0.0));
      break;
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Splits and batching

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct Split {
  Dataset train, val, test;
  SplitIndices indices;
};

/// Partition indices per (label, attribute) cell. Each non-empty cell gives
/// every split at least one sample; otherwise counts follow the fractions by
/// largest remainder.
inline SplitIndices stratified_split_indices(const Dataset& d, std::array<double, 3> fractions,
                                             std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  static const char* kNames[3] = {"train", "val", "test"};
  for (std::size_t s = 0; s < 3; ++s) {
    if (fractions[s] * static_cast<double>(d.size()) < 1.0) {
      throw ValidationError(std::string("split '") + kNames[s] + "' would be empty");
    }
  }
  const Shape& shape = d.shape();
  std::vector<std::vector<std::size_t>> cells(shape.classes * shape.cohorts);
  for (std::size_t i = 0; i < d.size(); ++i) {
    cells[d[i].label * shape.cohorts + d[i].attribute].push_back(i);
  }
  SplitIndices out;
  std::array<std::vector<std::size_t>*, 3> parts{&out.train, &out.val, &out.test};
  for (std::size_t cell = 0; cell < cells.size(); ++cell) {
    auto& members = cells[cell];
    if (members.empty()) continue;
    const std::size_t label = cell / shape.cohorts;
    const std::size_t attr = cell % shape.cohorts;
    if (members.size() < 3) {
      throw ValidationError("cell (label=" + std::to_string(label) + ", attribute=" +
                            std::to_string(attr) + ") has " + std::to_string(members.size()) +
                            " samples, fewer than the 3 splits");
    }
    Rng rng = detail::make_rng({seed, 0x5b17, cell});
    detail::shuffle(members, rng);
    auto counts = apportion(members.size(), fractions);
    for (std::size_t s = 0; s < 3; ++s) {
      if (counts[s] == 0) {
        const auto largest = static_cast<std::size_t>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        --counts[largest];
        counts[s] = 1;
      }
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t c = 0; c < counts[s]; ++c) parts[s]->push_back(members[pos++]);
    }
  }
  for (auto* p : parts) std::sort(p->begin(), p->end());
  return out;
}

inline Split stratified_split(const Dataset& d, std::array<double, 3> fractions, std::uint64_t seed) {
  SplitIndices idx = stratified_split_indices(d, fractions, seed);
  Dataset train = d.subset(idx.train);
  Dataset val = d.subset(idx.val);
  Dataset test = d.subset(idx.test);
  return Split{std::move(train), std::move(val), std::move(test), std::move(idx)};
}

/// One epoch of mini-batches: a seeded permutation of [0, n) cut into
/// batch_size chunks. A trailing chunk of one sample joins the previous batch.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 2) throw ValidationError("batch_size must be at least 2");
  if (n < 2) throw ValidationError("need at least 2 samples to form a batch");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = detail::make_rng({seed, 0xba7c, epoch});
  detail::shuffle(perm, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    const auto tail = out.back();
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> batches(const Dataset& d, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
  return batches(d.size(), batch_size, seed, epoch);
}

}  // namespace fairhai

#endif  // FAIRHAI_DATASET_HPP_
