#include "spa/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "spa/error.hpp"
#include "spa/text.hpp"

namespace spa {

bool Dataset::fully_labeled() const {
  return std::ranges::none_of(labels, [](int y) { return y < 0; });
}

std::vector<std::size_t> Dataset::class_labels() const {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      throw Error(ErrorKind::invalid_argument, "sample " + std::to_string(i) + " is unlabeled");
    }
    out[i] = static_cast<std::size_t>(labels[i]);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.features = gather_rows(features, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  out.domain = domain;
  out.num_classes = num_classes;
  return out;
}

void Dataset::validate() const {
  if (labels.size() != features.rows()) {
    throw Error(ErrorKind::dimension, "dataset label count does not match feature rows");
  }
  for (int y : labels) {
    if (y < kUnlabeled || (y >= 0 && static_cast<std::size_t>(y) >= num_classes)) {
      throw Error(ErrorKind::invalid_argument, "dataset label " + std::to_string(y) +
                                                   " outside [0, " + std::to_string(num_classes) +
                                                   ")");
    }
  }
}

Dataset gen_two_moons(std::size_t n, double noise, double rotation_deg, std::uint64_t seed,
                      Domain domain) {
  if (n == 0 || n % 2 != 0) throw Error(ErrorKind::invalid_argument, "two-moons n must be even");
  if (!(noise >= 0.0)) throw Error(ErrorKind::invalid_argument, "two-moons noise must be >= 0");

  const std::size_t half = n / 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);

  Dataset ds;
  ds.features = Matrix(n, 2);
  ds.labels.resize(n);
  ds.domain = domain;
  ds.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const bool inner = i >= half;
    const std::size_t j = inner ? i - half : i;
    const double t = half > 1 ? std::numbers::pi * static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
    double x = inner ? 1.0 - std::cos(t) : std::cos(t);
    double y = inner ? 0.5 - std::sin(t) : std::sin(t);
    if (noise > 0.0) {
      x += noise * gauss(rng);
      y += noise * gauss(rng);
    }
    ds.features(i, 0) = c * x - s * y;
    ds.features(i, 1) = s * x + c * y;
    ds.labels[i] = inner ? 1 : 0;
  }
  return ds;
}

std::pair<Dataset, Dataset> gen_blobs_shift(std::size_t n, std::size_t num_classes, std::size_t dim,
                                            const std::vector<double>& shift, double spread,
                                            std::uint64_t seed) {
  if (num_classes < 2) throw Error(ErrorKind::invalid_argument, "blobs need at least 2 classes");
  if (dim == 0 || n == 0) throw Error(ErrorKind::invalid_argument, "blobs need n > 0 and dim > 0");
  if (shift.size() != dim) throw Error(ErrorKind::dimension, "blob shift length must equal dim");
  if (!(spread > 0.0)) throw Error(ErrorKind::invalid_argument, "blob spread must be > 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix centers(num_classes, dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto row = centers.row(c);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : row) {
        v = gauss(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (double& v : row) v *= 5.0 * spread / norm;
  }

  Dataset source;
  source.features = Matrix(n, dim);
  source.labels.resize(n);
  source.domain = Domain::source;
  source.num_classes = num_classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % num_classes;
    for (std::size_t k = 0; k < dim; ++k) source.features(i, k) = centers(c, k) + spread * gauss(rng);
    source.labels[i] = static_cast<int>(c);
  }

  // The target is the source sample itself, translated.
  Dataset target = source;
  target.domain = Domain::target;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim; ++k) target.features(i, k) += shift[k];
  }
  return {std::move(source), std::move(target)};
}

Dataset load_csv_features(const std::filesystem::path& path, Domain domain,
                          std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open feature file " + path.string());

  auto fail = [&](std::size_t line, const std::string& why) {
    return Error(ErrorKind::parse, path.string() + ":" + std::to_string(line) + ": " + why);
  };

  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing header");
  const auto header = split_fields(trim(line), ',');
  if (header.size() < 2 || trim(header[0]) != "label") {
    throw fail(1, "header must be label,f0,...,f{d-1}");
  }
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (trim(header[k]) != "f" + std::to_string(k - 1)) {
      throw fail(1, "unexpected header column '" + std::string(header[k]) + "'");
    }
  }
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto fields = split_fields(body, ',');
    if (fields.size() != dim + 1) {
      throw fail(line_no, "expected " + std::to_string(dim + 1) + " fields, got " +
                              std::to_string(fields.size()));
    }
    const auto label = parse_int(trim(fields[0]));
    if (!label || *label < kUnlabeled) throw fail(line_no, "bad label '" + std::string(fields[0]) + "'");
    if (num_classes != 0 && *label >= 0 && static_cast<std::size_t>(*label) >= num_classes) {
      throw fail(line_no, "label " + std::to_string(*label) + " >= num_classes " +
                              std::to_string(num_classes));
    }
    labels.push_back(static_cast<int>(*label));
    for (std::size_t k = 1; k <= dim; ++k) {
      const auto v = parse_double(trim(fields[k]));
      if (!v || !std::isfinite(*v)) {
        throw fail(line_no, "bad value '" + std::string(fields[k]) + "'");
      }
      values.push_back(*v);
    }
  }
  if (labels.empty()) throw Error(ErrorKind::parse, path.string() + ": empty dataset");

  Dataset ds;
  ds.features = Matrix(labels.size(), dim, std::move(values));
  ds.labels = std::move(labels);
  ds.domain = domain;
  if (num_classes == 0) {
    const int max_label = *std::ranges::max_element(ds.labels);
    num_classes = static_cast<std::size_t>(std::max(max_label + 1, 0));
  }
  ds.num_classes = num_classes;
  return ds;
}

void save_csv_features(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write feature file " + path.string());
  out << "label";
  for (std::size_t k = 0; k < ds.dim(); ++k) out << ",f" << k;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.features.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (spec.mode == SplitMode::transductive) return {ds, ds};
  const std::size_t n = ds.size();
  if (n < 2) throw Error(ErrorKind::invalid_argument, "inductive split needs at least 2 samples");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "test_fraction must lie in (0, 1)");
  }

  // Group by label (unlabeled rows form their own group).
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[ds.labels[i]].push_back(i);

  const auto total_test = static_cast<std::size_t>(std::clamp<double>(
      std::round(spec.test_fraction * static_cast<double>(n)), 1.0, static_cast<double>(n - 1)));

  // Largest-remainder allocation of the test quota across groups.
  std::vector<std::pair<int, std::size_t>> quota;
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (const auto& [label, idx] : groups) {
    const double exact = static_cast<double>(total_test) * static_cast<double>(idx.size()) /
                         static_cast<double>(n);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quota.emplace_back(label, base);
    remainders.emplace_back(exact - static_cast<double>(base), label);
    assigned += base;
  }
  std::ranges::stable_sort(remainders, [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total_test && r < remainders.size(); ++r, ++assigned) {
    for (auto& [label, q] : quota) {
      if (label == remainders[r].second) ++q;
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (const auto& [label, q] : quota) {
    std::vector<std::size_t> idx = groups[label];
    std::shuffle(idx.begin(), idx.end(), rng);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(q), idx.end());
  }
  std::ranges::sort(train_idx);
  std::ranges::sort(test_idx);
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

std::vector<std::size_t> ssda_sample(const Dataset& ds, std::size_t shots, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == static_cast<int>(c)) idx.push_back(i);
    }
    if (idx.size() < shots) {
      throw Error(ErrorKind::insufficient_class,
                  "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                      " labeled samples, fewer than " + std::to_string(shots) + " shots");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(shots));
  }
  std::ranges::sort(out);
  return out;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  const KeyValues kv = read_key_values(path);
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  Manifest m;
  for (const auto& [key, entry] : kv) {
    const auto& [value, line] = entry;
    auto bad = [&](const std::string& why) {
      return Error(ErrorKind::parse, path.string() + ":" + std::to_string(line) + ": " + why);
    };
    if (key == "name") {
      m.name = value;
    } else if (key == "num_classes" || key == "dim") {
      const auto v = parse_int(value);
      if (!v || *v <= 0) throw bad(key + " must be a positive integer");
      (key == "dim" ? m.dim : m.num_classes) = static_cast<std::size_t>(*v);
    } else if (key == "source") {
      m.source = resolve(value);
    } else if (key == "target") {
      m.target = resolve(value);
    } else if (key == "target_test") {
      m.target_test = resolve(value);
    } else if (key == "generator") {
      m.generator = value;
    } else {
      throw bad("unknown manifest key '" + key + "'");
    }
  }
  if (m.source.empty() || m.target.empty() || m.num_classes == 0 || m.dim == 0) {
    throw Error(ErrorKind::parse,
                path.string() + ": manifest needs num_classes, dim, source and target");
  }
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write manifest " + path.string());
  out << "# spa dataset manifest\n";
  out << "name = " << name << '\n';
  if (generator) out << "generator = " << *generator << '\n';
  out << "num_classes = " << num_classes << '\n';
  out << "dim = " << dim << '\n';
  out << "source = " << source.generic_string() << '\n';
  out << "target = " << target.generic_string() << '\n';
  if (target_test) out << "target_test = " << target_test->generic_string() << '\n';
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

}  // namespace spa
