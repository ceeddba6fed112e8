#include "spa/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <system_error>

#include "CLI11.hpp"
#include "json.hpp"
#include "spa/checkpoint.hpp"
#include "spa/spectral.hpp"
#include "spa/text.hpp"

namespace spa::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

Error config_error(std::string_view key, const std::string& why) {
  return Error(ErrorKind::config, "config key '" + std::string(key) + "': " + why);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  const auto x = parse_int(v);
  if (!x || *x < 0) throw config_error(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(*x);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) { return to_size(key, v); }

double to_double(std::string_view key, std::string_view v) {
  const auto x = parse_double(v);
  if (!x) throw config_error(key, "expected a finite number, got '" + std::string(v) + "'");
  return *x;
}

bool to_bool(std::string_view key, std::string_view v) {
  const auto x = parse_bool(v);
  if (!x) throw config_error(key, "expected true or false, got '" + std::string(v) + "'");
  return *x;
}

std::string_view to_string(SplitMode mode) {
  return mode == SplitMode::inductive ? "inductive" : "transductive";
}

struct Field {
  std::string_view help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

template <class Member>
Field size_field(std::string_view help, Member member) {
  return {help, [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_size(k, v); }};
}

template <class Member>
Field u64_field(std::string_view help, Member member) {
  return {help, [member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_u64(k, v); }};
}

template <class Member>
Field double_field(std::string_view help, Member member) {
  return {help, [member](const RunConfig& c) { return format_double(member(c)); },
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_double(k, v); }};
}

template <class Member>
Field bool_field(std::string_view help, Member member) {
  return {help,
          [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); },
          [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = to_bool(k, v); }};
}

template <class Member>
Field path_field(std::string_view help, Member member) {
  return {help, [member](const RunConfig& c) { return member(c).generic_string(); },
          [member](RunConfig& c, std::string_view, std::string_view v) { member(c) = std::filesystem::path(v); }};
}

template <class Member>
Field choice_field(std::string_view help, Member member, std::vector<std::string> choices) {
  return {help, [member](const RunConfig& c) { return member(c); },
          [member, choices](RunConfig& c, std::string_view k, std::string_view v) {
            if (std::ranges::find(choices, v) == choices.end()) {
              std::string list;
              for (const auto& ch : choices) list += (list.empty() ? "" : ", ") + (ch.empty() ? "<empty>" : ch);
              throw config_error(k, "expected one of " + list + ", got '" + std::string(v) + "'");
            }
            member(c) = std::string(v);
          }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    t["max_iters"] = size_field("training iterations", [](auto& c) -> auto& { return c.train.max_iters; });
    t["batch_size"] = size_field("samples per domain per batch", [](auto& c) -> auto& { return c.train.batch_size; });
    t["lr0"] = double_field("initial learning rate", [](auto& c) -> auto& { return c.train.lr0; });
    t["momentum"] = double_field("SGD momentum", [](auto& c) -> auto& { return c.train.momentum; });
    t["weight_decay"] = double_field("L2 weight decay", [](auto& c) -> auto& { return c.train.weight_decay; });
    t["k"] = size_field("graph and vote neighbors", [](auto& c) -> auto& { return c.train.k; });
    t["metric"] = {"similarity: gaussian or cosine",
                   [](const RunConfig& c) { return std::string(spa::to_string(c.train.metric)); },
                   [](RunConfig& c, std::string_view k, std::string_view v) {
                     try {
                       c.train.metric = parse_similarity_kind(v);
                     } catch (const Error& e) {
                       throw config_error(k, e.what());
                     }
                   }};
    t["bandwidth"] = double_field("gaussian bandwidth, 0 = per-batch median", [](auto& c) -> auto& { return c.train.bandwidth; });
    t["laplacian"] = {"laplacian: rwk or sym",
                      [](const RunConfig& c) { return std::string(spa::to_string(c.train.laplacian)); },
                      [](RunConfig& c, std::string_view k, std::string_view v) {
                        try {
                          c.train.laplacian = parse_laplacian_kind(v);
                        } catch (const Error& e) {
                          throw config_error(k, e.what());
                        }
                      }};
    t["p"] = double_field("spectral distance norm", [](auto& c) -> auto& { return c.train.p; });
    t["zero_eps"] = double_field("spectral distance below which gradients vanish", [](auto& c) -> auto& { return c.train.zero_eps; });
    t["beta"] = double_field("memory bank EMA weight of the stored entry", [](auto& c) -> auto& { return c.train.beta; });
    t["tau"] = double_field("sharpening temperature", [](auto& c) -> auto& { return c.train.tau; });
    t["alpha_max"] = double_field("final pseudo-label loss weight", [](auto& c) -> auto& { return c.train.alpha_max; });
    t["gsa_coef"] = double_field("spectral alignment weight", [](auto& c) -> auto& { return c.train.gsa_coef; });
    t["adv_coef"] = double_field("adversarial loss weight", [](auto& c) -> auto& { return c.train.adv_coef; });
    t["ssda_smoothing"] = double_field("label smoothing on labeled target samples", [](auto& c) -> auto& { return c.train.ssda_smoothing; });
    t["enable_adv"] = bool_field("adversarial alignment", [](auto& c) -> auto& { return c.train.enable_adv; });
    t["enable_gsa"] = bool_field("spectral alignment", [](auto& c) -> auto& { return c.train.enable_gsa; });
    t["enable_nap"] = bool_field("neighbor-aware pseudo-labels", [](auto& c) -> auto& { return c.train.enable_nap; });
    t["seed"] = u64_field("training seed when seeds is empty", [](auto& c) -> auto& { return c.train.seed; });
    t["eval_every"] = size_field("iterations between target evaluations", [](auto& c) -> auto& { return c.train.eval_every; });

    t["data"] = path_field("dataset manifest", [](auto& c) -> auto& { return c.data; });
    t["generator"] = choice_field("in-memory dataset instead of a manifest", [](auto& c) -> auto& { return c.generator; },
                                  {"", "two-moons", "blobs"});
    t["n"] = size_field("generator: samples per domain", [](auto& c) -> auto& { return c.gen.n; });
    t["noise"] = double_field("generator: two-moons noise", [](auto& c) -> auto& { return c.gen.noise; });
    t["rotation"] = double_field("generator: two-moons target rotation in degrees", [](auto& c) -> auto& { return c.gen.rotation; });
    t["classes"] = size_field("generator: blob classes", [](auto& c) -> auto& { return c.gen.classes; });
    t["dim"] = size_field("generator: blob dimension", [](auto& c) -> auto& { return c.gen.dim; });
    t["shift"] = double_field("generator: blob target translation length", [](auto& c) -> auto& { return c.gen.shift; });
    t["spread"] = double_field("generator: blob spread", [](auto& c) -> auto& { return c.gen.spread; });
    t["data_seed"] = u64_field("generator seed", [](auto& c) -> auto& { return c.gen.seed; });
    t["architecture"] = choice_field("network: auto, synthetic or feature", [](auto& c) -> auto& { return c.architecture; },
                                     {"auto", "synthetic", "feature"});
    t["split"] = {"target protocol: transductive or inductive",
                  [](const RunConfig& c) { return std::string(to_string(c.split)); },
                  [](RunConfig& c, std::string_view k, std::string_view v) {
                    if (v == "transductive") {
                      c.split = SplitMode::transductive;
                    } else if (v == "inductive") {
                      c.split = SplitMode::inductive;
                    } else {
                      throw config_error(k, "expected transductive or inductive, got '" + std::string(v) + "'");
                    }
                  }};
    t["test_fraction"] = double_field("inductive held-out target fraction", [](auto& c) -> auto& { return c.test_fraction; });
    t["split_seed"] = u64_field("inductive split seed", [](auto& c) -> auto& { return c.split_seed; });
    t["ssda_shots"] = size_field("labeled target samples per class, 0 = unsupervised", [](auto& c) -> auto& { return c.ssda_shots; });
    t["seeds"] = {"training seeds, e.g. 0..4 or 0,3",
                  [](const RunConfig& c) {
                    std::string s;
                    for (auto v : c.seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
                    return s;
                  },
                  [](RunConfig& c, std::string_view k, std::string_view v) {
                    try {
                      c.seeds = parse_seed_list(v);
                    } catch (const Error& e) {
                      throw config_error(k, e.what());
                    }
                  }};
    t["out"] = path_field("output directory", [](auto& c) -> auto& { return c.out; });
    return t;
  }();
  return table;
}

std::string dashed(std::string key) {
  std::ranges::replace(key, '_', '-');
  return key;
}

ordered_json typed_value(const std::string& text) {
  if (const auto i = parse_int(text)) return *i;
  if (const auto d = parse_double(text)) return *d;
  if (text == "true" || text == "false") return text == "true";
  return text;
}

ordered_json config_json(const RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& [key, field] : fields()) j[key] = typed_value(field.get(cfg));
  return j;
}

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(); }

ordered_json metrics_json(const MetricsRecord& r) {
  ordered_json j;
  j["iter"] = r.iter;
  j["loss_cls"] = r.loss_cls;
  j["loss_adv"] = r.loss_adv;
  j["loss_gsa"] = r.loss_gsa;
  j["loss_nap"] = r.loss_nap;
  j["lr"] = r.lr;
  j["alpha"] = r.alpha;
  j["grl_lambda"] = r.grl_lambda;
  j["target_accuracy"] = optional_json(r.target_accuracy);
  return j;
}

double median(std::vector<double> v) {
  std::ranges::sort(v);
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

struct RunData {
  Dataset source;
  Dataset target_train;
  std::optional<Dataset> target_eval;
  NetworkSpec spec;
};

RunData load_run_data(const RunConfig& cfg) {
  RunData d;
  bool synthetic = false;
  std::optional<Dataset> target_test;
  if (!cfg.generator.empty()) {
    GeneratorParams g = cfg.gen;
    g.kind = cfg.generator;
    auto [s, t] = generate(g);
    d.source = std::move(s);
    d.target_train = std::move(t);
    synthetic = true;
  } else {
    const Manifest m = Manifest::load(cfg.data);
    d.source = load_csv_features(m.source, Domain::source, m.num_classes);
    d.target_train = load_csv_features(m.target, Domain::target, m.num_classes);
    if (m.target_test) target_test = load_csv_features(*m.target_test, Domain::target, m.num_classes);
    for (const Dataset* ds : {&d.source, &d.target_train}) {
      if (ds->dim() != m.dim) {
        throw Error(ErrorKind::dimension, cfg.data.string() + ": dataset width " + std::to_string(ds->dim()) +
                                              " does not match manifest dim " + std::to_string(m.dim));
      }
    }
    synthetic = m.generator.has_value();
  }

  if (cfg.split == SplitMode::inductive) {
    if (target_test) {
      d.target_eval = std::move(*target_test);
    } else {
      auto [train, test] = split(d.target_train, {SplitMode::inductive, cfg.test_fraction, cfg.split_seed});
      d.target_train = std::move(train);
      d.target_eval = std::move(test);
    }
  } else if (d.target_train.fully_labeled()) {
    d.target_eval = d.target_train;
  }

  const std::size_t classes = std::max(d.source.num_classes, d.target_train.num_classes);
  const bool small = cfg.architecture == "synthetic" || (cfg.architecture == "auto" && synthetic);
  d.spec = small ? NetworkSpec::synthetic(d.source.dim(), classes)
                 : NetworkSpec::feature_file(d.source.dim(), classes);
  return d;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const RunData data = load_run_data(cfg);
  make_dirs(cfg.out);

  const std::vector<std::uint64_t> seeds = cfg.seeds.empty() ? std::vector{cfg.train.seed} : cfg.seeds;
  ordered_json runs = ordered_json::array();
  std::vector<double> target_accs;
  std::vector<double> source_accs;
  for (std::uint64_t seed : seeds) {
    RunConfig seeded = cfg;
    seeded.train.seed = seed;
    seeded.seeds.clear();

    std::optional<std::vector<std::size_t>> ssda;
    if (cfg.ssda_shots > 0) ssda = ssda_sample(data.target_train, cfg.ssda_shots, seed);

    const std::string tag = "seed" + std::to_string(seed);
    const std::filesystem::path metrics_path = cfg.out / ("metrics_" + tag + ".jsonl");
    const std::filesystem::path ckpt_path = cfg.out / ("checkpoint_" + tag + ".txt");
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw Error(ErrorKind::io, "cannot write " + metrics_path.string());

    const TrainInputs inputs{data.source, data.target_train, ssda,
                             data.target_eval ? &*data.target_eval : nullptr};
    const TrainResult result = train(seeded.train, data.spec, inputs, [&](const MetricsRecord& r) {
      metrics << metrics_json(r).dump() << '\n';
    });
    metrics.close();
    if (!metrics) throw Error(ErrorKind::io, "failed writing " + metrics_path.string());

    save_checkpoint({run_config_fingerprint(seeded), result.network}, ckpt_path);

    const double source_acc = evaluate(result.network, data.source).accuracy;
    std::optional<double> target_acc;
    if (data.target_eval) target_acc = evaluate(result.network, *data.target_eval).accuracy;
    const bool aux_zero = std::ranges::all_of(result.log, [](const MetricsRecord& r) {
      return r.loss_adv == 0.0 && r.loss_gsa == 0.0 && r.loss_nap == 0.0;
    });
    const MetricsRecord& last = result.log.back();

    ordered_json run;
    run["seed"] = seed;
    run["checkpoint"] = ckpt_path.filename().string();
    run["metrics"] = metrics_path.filename().string();
    run["source_accuracy"] = source_acc;
    run["target_accuracy"] = optional_json(target_acc);
    run["final_losses"] = {{"loss_cls", last.loss_cls},
                           {"loss_adv", last.loss_adv},
                           {"loss_gsa", last.loss_gsa},
                           {"loss_nap", last.loss_nap}};
    run["auxiliary_losses_zero"] = aux_zero;
    runs.push_back(std::move(run));

    source_accs.push_back(source_acc);
    if (target_acc) target_accs.push_back(*target_acc);
    out << "seed " << seed << ": source accuracy " << format_double(source_acc);
    if (target_acc) out << ", target accuracy " << format_double(*target_acc);
    out << '\n';
  }

  ordered_json summary;
  summary["command"] = "train";
  summary["config"] = config_json(cfg);
  summary["runs"] = std::move(runs);
  summary["source_accuracy"] = {{"median", median(source_accs)}, {"mean", mean(source_accs)}};
  if (target_accs.empty()) {
    summary["target_accuracy"] = nullptr;
  } else {
    summary["target_accuracy"] = {{"median", median(target_accs)}, {"mean", mean(target_accs)}};
    out << "target accuracy median " << format_double(median(target_accs)) << ", mean "
        << format_double(mean(target_accs)) << '\n';
  }
  write_text(cfg.out / "summary.json", summary.dump(2) + '\n');
  return kOk;
}

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path csv;
  std::string domain = "target";
  std::string split = "transductive";
  double test_fraction = 0.5;
  std::uint64_t split_seed = 0;
};

Dataset select_eval_set(const EvalArgs& a, std::size_t num_classes) {
  if (a.data.empty() == a.csv.empty()) {
    throw Error(ErrorKind::config, "exactly one of --data or --csv is required");
  }
  if (!a.csv.empty()) return load_csv_features(a.csv, Domain::target, num_classes);
  const Manifest m = Manifest::load(a.data);
  if (a.domain == "source") return load_csv_features(m.source, Domain::source, m.num_classes);
  if (a.split == "transductive") return load_csv_features(m.target, Domain::target, m.num_classes);
  if (m.target_test) return load_csv_features(*m.target_test, Domain::target, m.num_classes);
  const Dataset target = load_csv_features(m.target, Domain::target, m.num_classes);
  return split(target, {SplitMode::inductive, a.test_fraction, a.split_seed}).second;
}

void check_compatible(const Network& net, const Dataset& ds, const std::filesystem::path& ckpt) {
  if (ds.dim() != net.spec.input_dim()) {
    throw Error(ErrorKind::dimension, "checkpoint " + ckpt.string() + " expects " +
                                          std::to_string(net.spec.input_dim()) + " features, dataset has " +
                                          std::to_string(ds.dim()));
  }
  if (ds.num_classes > net.spec.num_classes) {
    throw Error(ErrorKind::dimension, "checkpoint " + ckpt.string() + " has " +
                                          std::to_string(net.spec.num_classes) + " classes, dataset has " +
                                          std::to_string(ds.num_classes));
  }
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset ds = select_eval_set(a, ckpt.network.spec.num_classes);
  check_compatible(ckpt.network, ds, a.checkpoint);
  const EvalResult r = evaluate(ckpt.network, ds);
  ordered_json j;
  j["samples"] = ds.size();
  j["accuracy"] = r.accuracy;
  ordered_json per_class = ordered_json::array();
  for (const auto& c : r.per_class) per_class.push_back(optional_json(c));
  j["per_class"] = std::move(per_class);
  out << j.dump(2) << '\n';
  return kOk;
}

struct SpectraArgs {
  std::filesystem::path source;
  std::filesystem::path target;
  std::size_t k = 5;
  std::string metric = "gaussian";
  double bandwidth = 0.0;
  std::string laplacian = "rwk";
  std::filesystem::path out;
};

int cmd_spectra(const SpectraArgs& a, std::ostream& out) {
  const Dataset s = load_csv_features(a.source, Domain::source);
  const Dataset t = load_csv_features(a.target, Domain::target);
  if (s.size() != t.size()) {
    throw Error(ErrorKind::dimension, "spectra need equal row counts, got " + std::to_string(s.size()) +
                                          " and " + std::to_string(t.size()));
  }
  if (a.bandwidth < 0.0) throw Error(ErrorKind::config, "bandwidth must be >= 0 (0 = median heuristic)");
  GsaConfig cfg;
  cfg.k = a.k;
  cfg.laplacian = parse_laplacian_kind(a.laplacian);
  cfg.metric = parse_similarity_kind(a.metric) == SimilarityKind::cosine
                   ? SimilarityMetric::cosine()
                   : SimilarityMetric::gaussian(a.bandwidth > 0.0 ? std::optional(a.bandwidth) : std::nullopt);
  cfg.validate();
  const LaplacianSpectrum ls = spectrum(s.features, cfg);
  const LaplacianSpectrum lt = spectrum(t.features, cfg);

  ordered_json j;
  j["k"] = a.k;
  j["metric"] = a.metric;
  j["bandwidth"] = a.bandwidth;
  j["laplacian"] = a.laplacian;
  j["source_eigenvalues"] = ls.eigenvalues;
  j["target_eigenvalues"] = lt.eigenvalues;
  j["sigma_1"] = spectral_distance(ls.eigenvalues, lt.eigenvalues, 1.0);
  j["sigma_2"] = spectral_distance(ls.eigenvalues, lt.eigenvalues, 2.0);
  const std::string text = j.dump(2) + '\n';
  if (!a.out.empty()) write_text(a.out, text);
  out << text;
  return kOk;
}

struct ADistanceArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path source;
  std::filesystem::path target;
  std::uint64_t seed = 0;
};

int cmd_a_distance(const ADistanceArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const std::size_t classes = ckpt.network.spec.num_classes;
  Dataset s;
  Dataset t;
  if (!a.data.empty()) {
    if (!a.source.empty() || !a.target.empty()) {
      throw Error(ErrorKind::config, "--data excludes --source/--target");
    }
    const Manifest m = Manifest::load(a.data);
    s = load_csv_features(m.source, Domain::source, m.num_classes);
    t = load_csv_features(m.target, Domain::target, m.num_classes);
  } else {
    if (a.source.empty() || a.target.empty()) {
      throw Error(ErrorKind::config, "need --data or both --source and --target");
    }
    s = load_csv_features(a.source, Domain::source, classes);
    t = load_csv_features(a.target, Domain::target, classes);
  }
  check_compatible(ckpt.network, s, a.checkpoint);
  check_compatible(ckpt.network, t, a.checkpoint);
  const double d = a_distance(extract_features(ckpt.network, s.features),
                              extract_features(ckpt.network, t.features), a.seed);
  ordered_json j;
  j["a_distance"] = d;
  out << j.dump(2) << '\n';
  return kOk;
}

int cmd_gen_data(GeneratorParams g, const std::filesystem::path& dir, const std::string& name,
                 std::ostream& out) {
  g.validate();
  auto [s, t] = generate(g);
  make_dirs(dir);
  save_csv_features(s, dir / "source.csv");
  save_csv_features(t, dir / "target.csv");
  Manifest m;
  m.name = name.empty() ? g.kind : name;
  m.num_classes = s.num_classes;
  m.dim = s.dim();
  m.source = "source.csv";
  m.target = "target.csv";
  m.generator = g.describe();
  m.save(dir / "manifest.txt");
  out << "wrote " << (dir / "manifest.txt").string() << " (" << s.size() << " source, " << t.size()
      << " target rows)\n";
  return kOk;
}

}  // namespace

ExitCode exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument:
      return kUsage;
    case ErrorKind::parse:
    case ErrorKind::io:
    case ErrorKind::dimension:
    case ErrorKind::index:
    case ErrorKind::insufficient_class:
      return kDataError;
    case ErrorKind::divergence:
    case ErrorKind::convergence:
    case ErrorKind::symmetry:
    case ErrorKind::insufficient_memory:
      return kDivergence;
  }
  return kUsage;
}

void GeneratorParams::validate() const {
  auto bad = [](const std::string& why) { return Error(ErrorKind::config, why); };
  if (kind != "two-moons" && kind != "blobs") throw bad("generator kind must be two-moons or blobs, got '" + kind + "'");
  if (n < 2) throw bad("generator n must be >= 2");
  if (!(noise >= 0.0)) throw bad("generator noise must be >= 0");
  if (kind == "blobs") {
    if (classes < 2) throw bad("blobs need at least 2 classes");
    if (dim < 1) throw bad("blobs need dim >= 1");
    if (!(spread > 0.0)) throw bad("blob spread must be > 0");
  }
}

std::string GeneratorParams::describe() const {
  if (kind == "two-moons") {
    return "two-moons n=" + std::to_string(n) + " noise=" + format_double(noise) +
           " rotation=" + format_double(rotation) + " seed=" + std::to_string(seed);
  }
  return "blobs n=" + std::to_string(n) + " classes=" + std::to_string(classes) + " dim=" + std::to_string(dim) +
         " shift=" + format_double(shift) + " spread=" + format_double(spread) + " seed=" + std::to_string(seed);
}

std::pair<Dataset, Dataset> generate(const GeneratorParams& g) {
  g.validate();
  if (g.kind == "two-moons") {
    return {gen_two_moons(g.n, g.noise, 0.0, g.seed, Domain::source),
            gen_two_moons(g.n, g.noise, g.rotation, g.seed + 1, Domain::target)};
  }
  const std::vector<double> shift(g.dim, g.shift / std::sqrt(static_cast<double>(g.dim)));
  return gen_blobs_shift(g.n, g.classes, g.dim, shift, g.spread, g.seed);
}

void RunConfig::validate() const {
  train.validate();
  if (data.empty() == generator.empty()) {
    throw Error(ErrorKind::config, "exactly one of 'data' (manifest) or 'generator' must be set");
  }
  if (out.empty()) throw Error(ErrorKind::config, "config key 'out': output directory is required");
  if (split == SplitMode::inductive && !(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::config, "config key 'test_fraction': must lie in (0, 1)");
  }
  if (!generator.empty()) {
    GeneratorParams g = gen;
    g.kind = generator;
    g.validate();
  }
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

void set_run_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw Error(ErrorKind::config, "unknown config key '" + std::string(key) + "'");
  it->second.set(cfg, key, trim(value));
}

std::string run_config_text(const RunConfig& cfg) {
  std::string text;
  for (const auto& [key, field] : fields()) text += key + " = " + field.get(cfg) + '\n';
  return text;
}

std::string run_config_fingerprint(const RunConfig& cfg) {
  RunConfig copy = cfg;
  copy.out.clear();
  return fnv1a_hex(run_config_text(copy));
}

RunConfig resolve_run_config(const std::filesystem::path& config_file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!config_file.empty()) {
    for (const auto& [key, entry] : read_key_values(config_file)) {
      try {
        set_run_config_value(cfg, key, entry.first);
      } catch (const Error& e) {
        throw Error(e.kind(), config_file.string() + ":" + std::to_string(entry.second) + ": " + e.what());
      }
    }
    // Paths in a config file are relative to the file.
    const std::filesystem::path base = config_file.parent_path();
    if (!cfg.data.empty() && cfg.data.is_relative()) cfg.data = base / cfg.data;
    if (!cfg.out.empty() && cfg.out.is_relative()) cfg.out = base / cfg.out;
  }
  for (const auto& [key, value] : overrides) set_run_config_value(cfg, key, value);
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  auto bad = [&] { return Error(ErrorKind::config, "invalid seed list '" + std::string(text) + "'"); };
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const auto lo = parse_int(trim(text.substr(0, dots)));
    const auto hi = parse_int(trim(text.substr(dots + 2)));
    if (!lo || !hi || *lo < 0 || *hi < *lo) throw bad();
    for (auto s = *lo; s <= *hi; ++s) out.push_back(static_cast<std::uint64_t>(s));
    return out;
  }
  for (std::string_view tok : split_fields(text, ',')) {
    const auto v = parse_int(trim(tok));
    if (!v || *v < 0) throw bad();
    out.push_back(static_cast<std::uint64_t>(*v));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral alignment for unsupervised domain adaptation", "spa"};
  app.require_subcommand(1);

  GeneratorParams gen;
  std::filesystem::path gen_out;
  std::string gen_name;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic source/target pair and manifest");
  gen_cmd->add_option("--kind", gen.kind, "two-moons or blobs")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "samples per domain")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "two-moons noise")->capture_default_str();
  gen_cmd->add_option("--rotation", gen.rotation, "two-moons target rotation in degrees")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "blob classes")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "blob dimension")->capture_default_str();
  gen_cmd->add_option("--shift", gen.shift, "blob target translation length")->capture_default_str();
  gen_cmd->add_option("--spread", gen.spread, "blob spread")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "source seed; the target uses seed + 1 for two-moons")->capture_default_str();
  gen_cmd->add_option("--name", gen_name, "manifest name");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();

  std::filesystem::path config_file;
  std::map<std::string, std::string> train_values;
  std::vector<std::pair<std::string, CLI::Option*>> train_opts;
  bool disable_adv = false;
  bool disable_gsa = false;
  bool disable_nap = false;
  auto* train_cmd = app.add_subcommand("train", "Train on a manifest or generated data");
  train_cmd->add_option("--config", config_file, "flat key = value file");
  for (const auto& [key, field] : fields()) {
    train_opts.emplace_back(key, train_cmd->add_option("--" + dashed(key), train_values[key], std::string(field.help)));
  }
  train_cmd->add_flag("--disable-adv", disable_adv, "same as --enable-adv false");
  train_cmd->add_flag("--disable-gsa", disable_gsa, "same as --enable-gsa false");
  train_cmd->add_flag("--disable-nap", disable_nap, "same as --enable-nap false");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on labeled data");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data, "manifest");
  eval_cmd->add_option("--csv", ev.csv, "labeled feature CSV");
  eval_cmd->add_option("--domain", ev.domain, "manifest domain")->check(CLI::IsMember({"source", "target"}))->capture_default_str();
  eval_cmd->add_option("--split", ev.split, "target protocol")->check(CLI::IsMember({"transductive", "inductive"}))->capture_default_str();
  eval_cmd->add_option("--test-fraction", ev.test_fraction)->capture_default_str();
  eval_cmd->add_option("--split-seed", ev.split_seed)->capture_default_str();

  SpectraArgs sp;
  auto* spectra_cmd = app.add_subcommand("spectra", "Laplacian spectra of two feature sets and their distance");
  spectra_cmd->add_option("--source", sp.source, "feature CSV")->required();
  spectra_cmd->add_option("--target", sp.target, "feature CSV")->required();
  spectra_cmd->add_option("--k", sp.k)->capture_default_str();
  spectra_cmd->add_option("--metric", sp.metric)->check(CLI::IsMember({"gaussian", "cosine"}))->capture_default_str();
  spectra_cmd->add_option("--bandwidth", sp.bandwidth, "0 = median heuristic")->capture_default_str();
  spectra_cmd->add_option("--laplacian", sp.laplacian)->check(CLI::IsMember({"rwk", "sym"}))->capture_default_str();
  spectra_cmd->add_option("--out", sp.out, "also write the report here");

  ADistanceArgs ad;
  auto* ad_cmd = app.add_subcommand("a-distance", "Proxy A-distance of checkpoint features");
  ad_cmd->add_option("--checkpoint", ad.checkpoint)->required();
  ad_cmd->add_option("--data", ad.data, "manifest (source vs target)");
  ad_cmd->add_option("--source", ad.source, "feature CSV");
  ad_cmd->add_option("--target", ad.target, "feature CSV");
  ad_cmd->add_option("--seed", ad.seed)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, gen_out, gen_name, out);
    if (*train_cmd) {
      std::vector<std::pair<std::string, std::string>> overrides;
      for (const auto& [key, opt] : train_opts) {
        if (opt->count() > 0) overrides.emplace_back(key, train_values[key]);
      }
      if (disable_adv) overrides.emplace_back("enable_adv", "false");
      if (disable_gsa) overrides.emplace_back("enable_gsa", "false");
      if (disable_nap) overrides.emplace_back("enable_nap", "false");
      return cmd_train(resolve_run_config(config_file, overrides), out);
    }
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*spectra_cmd) return cmd_spectra(sp, out);
    if (*ad_cmd) return cmd_a_distance(ad, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace spa::cli
