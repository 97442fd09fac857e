// shiftguard: command-line driver for the synth -> shift -> pretrain -> adapt
// -> eval pipeline. Every command reads one JSON config and copies it next to
// its outputs.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shiftguard/shiftguard.hpp"

namespace {

using namespace shiftguard;
namespace fs = std::filesystem;
using io::Json;

struct Args {
  fs::path config;
  std::vector<fs::path> in;
  fs::path out;
};

// ---- config parsing -------------------------------------------------------

class Section {
 public:
  Section(const Json& root, const char* name) : name_(name) {
    if (root.contains(name)) {
      j_ = root.at(name);
      if (!j_.is_object()) throw FormatError(std::string("config: section '") + name + "' must be an object");
    } else {
      j_ = Json::object();
    }
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const Json& v = j_.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
    else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
    else if constexpr (std::is_integral_v<T>) ok = v.is_number_unsigned();
    else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
    else ok = v.is_array();
    if (!ok) throw FormatError("config: " + name_ + "." + key + " has the wrong type");
    dst = v.get<T>();
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  // Rejects keys nobody asked for, so typos do not pass silently.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw FormatError("config: unknown key " + name_ + "." + k);
  }

 private:
  std::string name_;
  Json j_;
  std::set<std::string> seen_;
};

struct RunConfig {
  std::string text;  // copied verbatim next to the outputs
  Json raw;
  std::uint64_t seed = 0;
  SynthConfig synth;
  ShiftSpec shift;
  PretrainConfig pretrain;
  AdaptConfig adapt;
};

RunConfig load_config(const fs::path& path) {
  RunConfig c;
  c.text = io::read_file(path);
  try {
    c.raw = Json::parse(c.text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!c.raw.is_object()) throw FormatError("config: top level must be an object");
  const auto& seed = io::field(c.raw, "seed", "config");
  if (!seed.is_number_unsigned()) throw FormatError("config: seed must be a non-negative integer");
  c.seed = seed.get<std::uint64_t>();
  for (const auto& [k, v] : c.raw.items())
    if (k != "seed" && k != "synth" && k != "shift" && k != "pretrain" && k != "adapt")
      throw FormatError("config: unknown section " + k);

  // a section's own seed overrides the global one
  c.synth.seed = c.shift.seed = c.pretrain.seed = c.adapt.seed = c.seed;

  Section s(c.raw, "synth");
  s.get("cluster_sizes", c.synth.cluster_sizes);
  s.get("unseen_size", c.synth.unseen_size);
  s.get("anomaly_size", c.synth.anomaly_size);
  s.get("feat_dim", c.synth.feat_dim);
  s.get("cluster_spread", c.synth.cluster_spread);
  s.get("center_separation", c.synth.center_separation);
  s.get("intra_p", c.synth.intra_p);
  s.get("inter_p", c.synth.inter_p);
  s.get("anomaly_mix", c.synth.anomaly_mix);
  s.get("seed", c.synth.seed);
  s.finish();

  Section sh(c.raw, "shift");
  std::string method = "kmeans_holdout";
  sh.get("method", method);
  if (method == "kmeans_holdout") c.shift.method = ShiftSpec::Method::kKMeansHoldout;
  else if (method == "class_holdout") c.shift.method = ShiftSpec::Method::kClassHoldout;
  else throw FormatError("config: shift.method must be kmeans_holdout or class_holdout");
  sh.get("num_clusters", c.shift.num_clusters);
  sh.get("anomaly_class_threshold", c.shift.anomaly_class_threshold);
  sh.get("seed", c.shift.seed);
  sh.finish();

  Section p(c.raw, "pretrain");
  p.get("hidden_dim", c.pretrain.hidden_dim);
  p.get("repr_dim", c.pretrain.repr_dim);
  p.get("epochs", c.pretrain.epochs);
  p.get("lr", c.pretrain.lr);
  p.get("patience", c.pretrain.patience);
  p.get("seed", c.pretrain.seed);
  if (const Json* w = p.raw("positive_weight")) {
    // a number, or "auto" for the train normal:anomaly ratio
    if (w->is_number()) c.pretrain.positive_weight = w->get<double>();
    else if (!(w->is_string() && w->get<std::string>() == "auto"))
      throw FormatError("config: pretrain.positive_weight must be a number or \"auto\"");
  }
  p.finish();

  Section a(c.raw, "adapt");
  a.get("k_percent", c.adapt.k_percent);
  a.get("outer_rounds", c.adapt.outer_rounds);
  a.get("aligner_steps_per_round", c.adapt.aligner_steps_per_round);
  a.get("estimator_steps_per_round", c.adapt.estimator_steps_per_round);
  a.get("lr_align", c.adapt.lr_align);
  a.get("lr_est", c.adapt.lr_est);
  a.get("temperature", c.adapt.temperature);
  a.get("estimator_enabled", c.adapt.estimator_enabled);
  a.get("seed", c.adapt.seed);
  a.finish();
  return c;
}

// ---- helpers ----------------------------------------------------------------

void need_inputs(const Args& a, std::size_t lo, std::size_t hi, const char* usage) {
  if (a.in.size() < lo || a.in.size() > hi) throw ContractError(std::string("expected --in ") + usage);
}

void need_out(const Args& a) {
  if (a.out.empty()) throw ContractError("--out is required");
}

// Directory outputs get config.json inside; file outputs get <file>.config.json.
void log_config_dir(const RunConfig& c, const fs::path& dir) { io::write_file(dir / "config.json", c.text); }
void log_config_file(const RunConfig& c, const fs::path& file) {
  io::write_file(fs::path(file.string() + ".config.json"), c.text);
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::vector<int> read_classes(const fs::path& path, std::size_t n) {
  const auto lines = io::read_lines(path);
  if (lines.empty() || lines[0] != "class") throw FormatError(path.string() + ": expected header 'class'");
  if (lines.size() != n + 1)
    throw FormatError(path.string() + ": expected " + std::to_string(n) + " rows, got " + std::to_string(lines.size() - 1));
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(io::parse_int(lines[i + 1], path.string()));
  return out;
}

// ---- commands -----------------------------------------------------------------

void cmd_synth(const Args& a, const RunConfig& c) {
  need_inputs(a, 0, 0, "(none)");
  need_out(a);
  save_bundle(synth_graph(c.synth), a.out);
  log_config_dir(c, a.out);
}

void cmd_shift(const Args& a, const RunConfig& c) {
  const bool by_class = c.shift.method == ShiftSpec::Method::kClassHoldout;
  if (by_class) need_inputs(a, 2, 2, "<bundle> <classes.csv>");
  else need_inputs(a, 1, 1, "<bundle>");
  need_out(a);
  const Graph g = load_bundle(a.in[0]);
  const Graph out = by_class ? apply_class_holdout(g, read_classes(a.in[1], g.num_nodes()), c.shift)
                             : construct_shift_kmeans(g, c.shift);
  save_bundle(out, a.out);
  log_config_dir(c, a.out);
}

void cmd_pretrain(const Args& a, const RunConfig& c) {
  need_inputs(a, 1, 1, "<bundle>");
  need_out(a);
  const Graph g = load_bundle(a.in[0]);
  const GadModel m = pretrain(remove_unseen(g), c.pretrain);
  ensure_parent(a.out);
  save_model(m, a.out);
  log_config_file(c, a.out);
}

void cmd_adapt(const Args& a, const RunConfig& c) {
  need_inputs(a, 2, 2, "<bundle> <model>");
  need_out(a);
  const Graph g = load_bundle(a.in[0]);
  const GadModel m = load_model(a.in[1]);
  const AdaptResult r = adapt(g, m, c.adapt);
  fs::create_directories(a.out);
  io::write_json(a.out / "aligner.json", aligner_to_json(r.aligner));
  io::write_json(a.out / "estimator.json", estimator_to_json(r.estimator));
  io::write_json(a.out / "trace.json", trace_to_json(r.trace));
  log_config_dir(c, a.out);
}

void cmd_eval(const Args& a, const RunConfig& c) {
  need_inputs(a, 2, 4, "<bundle> <model> [aligner] [estimator]");
  need_out(a);
  const Graph g = load_bundle(a.in[0]);
  g.require_labels();
  const GadModel m = load_model(a.in[1]);
  Json report;
  report["before"] = report_to_json(evaluate(g, adapted_scores(g, m)));
  if (a.in.size() >= 3) {
    const AlignerParams al = aligner_from_json(io::read_json(a.in[2]), a.in[2].string());
    require(al.dim() == g.feat_dim(), "aligner dim does not match the bundle");
    if (a.in.size() == 4) {
      // scores come from the main branch; the estimator is only checked
      const EstimatorParams e = estimator_from_json(io::read_json(a.in[3]), a.in[3].string());
      require(e.weight.rows() == m.repr_dim, "estimator dim does not match the model");
    }
    report["after"] = report_to_json(evaluate(g, adapted_scores(g, m, &al)));
  } else {
    report["after"] = nullptr;
  }
  ensure_parent(a.out);
  io::write_json(a.out, report);
  log_config_file(c, a.out);
}

void cmd_study(const Args& a, const RunConfig& c) {
  need_inputs(a, 3, 3, "<bundle_before> <bundle_after> <model>");
  need_out(a);
  const Graph before = load_bundle(a.in[0]);
  const Graph after = load_bundle(a.in[1]);
  const GadModel m = load_model(a.in[2]);
  MetricReport r = evaluate(after, adapted_scores(after, m));
  r.contamination_bins = contamination_study(before, after, m);
  ensure_parent(a.out);
  io::write_json(a.out, report_to_json(r));
  log_config_file(c, a.out);
}

void cmd_project(const Args& a, const RunConfig& c) {
  need_inputs(a, 2, 3, "<bundle> <model> [aligner]");
  need_out(a);
  const Graph g = load_bundle(a.in[0]);
  const GadModel m = load_model(a.in[1]);
  Tensor x = g.features;
  if (a.in.size() == 3) {
    const AlignerParams al = aligner_from_json(io::read_json(a.in[2]), a.in[2].string());
    require(al.dim() == g.feat_dim(), "aligner dim does not match the bundle");
    x = align(x, al);
  }
  const Tensor h = encode(sym_normalize(g), x, m);
  ensure_parent(a.out);
  io::write_file(a.out, projection_csv(g, pca_2d(h)));
  log_config_file(c, a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time adaptation for graph anomaly detection under normality shift"};
  app.require_subcommand(1);
  Args args;
  const std::map<std::string, std::pair<std::string, std::function<void(const Args&, const RunConfig&)>>> commands{
      {"synth", {"write a synthetic shifted benchmark bundle", cmd_synth}},
      {"shift", {"flag unseen normals (kmeans or class holdout)", cmd_shift}},
      {"pretrain", {"train the detector on the pre-shift graph", cmd_pretrain}},
      {"adapt", {"test-time adaptation; writes aligner, estimator, trace", cmd_adapt}},
      {"eval", {"metrics before and after adaptation", cmd_eval}},
      {"study", {"contamination study between two bundles", cmd_study}},
      {"project", {"2D PCA projection of node representations", cmd_project}},
  };
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", args.config, "JSON run config")->required();
    sub->add_option("--in", args.in, "input paths, in command order");
    sub->add_option("--out", args.out, "output file or directory");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    const RunConfig cfg = load_config(args.config);
    commands.at(name).second(args, cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
