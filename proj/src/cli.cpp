#include "dfrot/cli.hpp"

#include "dfrot/error.hpp"
#include "dfrot/invariance.hpp"
#include "dfrot/io.hpp"
#include "dfrot/massive.hpp"
#include "dfrot/optimizer.hpp"
#include "dfrot/quantizer.hpp"
#include "dfrot/report.hpp"
#include "dfrot/rotations.hpp"
#include "dfrot/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace dfrot {

namespace {

using json = nlohmann::json;

constexpr const char* kThreadsEnv = "DFROT_NUM_THREADS";

struct QuantOptions {
  int bits = 4;
  double alpha = 1.0;
  double beta = 1.0;

  void add_to(CLI::App* app) {
    app->add_option("--bits", bits, "activation bit-width N")->capture_default_str()->check(CLI::Range(2, 8));
    app->add_option("--alpha", alpha, "clip ratio on each token's max")->capture_default_str();
    app->add_option("--beta", beta, "clip ratio on each token's min")->capture_default_str();
  }

  QuantConfig config() const {
    QuantConfig cfg;
    cfg.bits = bits;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.validate();
    return cfg;
  }

  json to_json() const { return {{"bits", bits}, {"alpha", alpha}, {"beta", beta}}; }
};

Dtype parse_dtype(const std::string& s) { return s == "f32" ? Dtype::f32 : Dtype::f64; }

double parse_gamma(const std::string& s) {
  if (s == "inf" || s == "infinity") return kGammaInfinite;
  std::size_t used = 0;
  double g = 0.0;
  try {
    g = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(g >= 0.0) || std::isinf(g)) {
    throw Error(ErrorCode::usage, "--gamma must be a non-negative number or 'inf', got '" + s + "'");
  }
  return g;
}

class Manifest {
 public:
  explicit Manifest(std::string subcommand) : start_(std::chrono::steady_clock::now()) {
    doc_["tool"] = "dfrot";
    doc_["tool_version"] = kToolVersion;
    doc_["subcommand"] = std::move(subcommand);
    doc_["parameters"] = json::object();
    doc_["seeds"] = json::array();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
    const char* threads = std::getenv(kThreadsEnv);
    doc_["threads_env"] = threads != nullptr ? json(threads) : json(nullptr);
  }

  json& parameters() { return doc_["parameters"]; }
  void seed(std::uint64_t s) { doc_["seeds"].push_back(s); }
  void input(const std::string& role, const std::string& path) { doc_["inputs"][role] = path; }
  void output(const std::string& role, const std::string& path) { doc_["outputs"][role] = path; }
  json& results() { return doc_["results"]; }

  void write(const std::string& path) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    doc_["wall_time_seconds"] = elapsed.count();
    io::write_text(path, report::dump(doc_));
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::string manifest_path(const std::string& override_path, const std::string& primary_output) {
  return override_path.empty() ? primary_output + ".manifest.json" : override_path;
}

struct GenRotOptions {
  long long dim = 0;
  std::string kind = "rh";
  std::uint64_t seed = 0;
  std::string out;
  std::string dtype = "f64";
  bool enforce_det = false;
  std::string manifest;
};

int run_gen_rot(const GenRotOptions& o, std::ostream& out) {
  Manifest m("gen-rot");
  const RotationMatrix base = o.kind == "rh" ? hadamard_randomized(o.dim, o.seed) : orthogonal_random(o.dim, o.seed);
  const RotationMatrix r = o.enforce_det ? enforce_rotation(base) : base;
  io::write_dfrm(r, o.out, parse_dtype(o.dtype));

  m.parameters() = {{"dim", o.dim}, {"kind", o.kind}, {"dtype", o.dtype}, {"enforce_det", o.enforce_det}};
  m.seed(o.seed);
  m.output("rotation", o.out);
  m.results() = {{"det_sign", r.det_sign()}, {"orthogonality_error", orthogonality_error(r.matrix())}};
  m.write(manifest_path(o.manifest, o.out));
  out << "wrote " << to_string(r.kind()) << " rotation dim=" << r.dim() << " det=" << r.det_sign() << " to "
      << o.out << "\n";
  return exit_codes::success;
}

struct SynthOptions {
  SynthSpec spec;
  std::string out;
  std::string mask_out;
  std::string dtype = "f64";
  std::string manifest;
};

int run_synth(const SynthOptions& o, std::ostream& out) {
  Manifest m("synth");
  const SynthData data = generate(o.spec);
  io::write_dfat(TokenMatrix{data.activations, parse_dtype(o.dtype), "synth"}, o.out);
  if (!o.mask_out.empty()) {
    io::write_text(o.mask_out, report::dump(report::to_json(data.truth)));
    m.output("mask", o.mask_out);
  }
  const SynthSpec& s = o.spec;
  m.parameters() = {{"tokens", s.tokens},
                    {"dim", s.dim},
                    {"outlier_channels", s.outlier_channels},
                    {"outlier_scale", s.outlier_scale},
                    {"massive_count", s.massive_count},
                    {"massive_scale", s.massive_scale},
                    {"noise_sigma", s.noise_sigma},
                    {"normalize_l2", s.normalize_l2},
                    {"dtype", o.dtype}};
  m.seed(s.seed);
  m.output("activations", o.out);
  m.results() = {{"massive_tokens", data.truth.indices()}, {"outlier_channels", data.outlier_channel_indices}};
  m.write(manifest_path(o.manifest, o.out));
  out << "wrote " << s.tokens << "x" << s.dim << " activations (" << data.truth.count() << " massive) to " << o.out
      << "\n";
  return exit_codes::success;
}

struct DetectOptions {
  std::string activations;
  double tau_rel = kDefaultTauRel;
  std::optional<double> tau_abs;
  std::string out;
  std::string manifest;
};

int run_detect(const DetectOptions& o, std::ostream& out) {
  Manifest m("detect");
  const TokenMatrix x = io::read_dfat(o.activations);
  const MassiveMask mask = detect_massive(x.values, o.tau_rel, o.tau_abs);
  io::write_text(o.out, report::dump(report::to_json(mask)));
  m.parameters() = {{"tau_rel", o.tau_rel}, {"tau_abs", o.tau_abs ? json(*o.tau_abs) : json(nullptr)}};
  m.input("activations", o.activations);
  m.output("mask", o.out);
  m.results() = {{"flagged", mask.count()}, {"fraction", mask.fraction()}};
  m.write(manifest_path(o.manifest, o.out));
  out << "flagged " << mask.count() << " of " << mask.tokens() << " tokens (median l_inf " << mask.median_linf
      << ")\n";
  return exit_codes::success;
}

struct EvalOptions {
  std::string activations;
  std::string rotation;
  QuantOptions quant;
  std::string mask;
  std::string report;
  std::string csv;
  std::string svg;
  std::string manifest;
};

int run_eval(const EvalOptions& o, std::ostream& out) {
  Manifest m("eval");
  const QuantConfig cfg = o.quant.config();
  const TokenMatrix x = io::read_dfat(o.activations);
  std::optional<RotationMatrix> rotation;
  if (!o.rotation.empty()) {
    rotation = io::read_dfrm(o.rotation);
    m.input("rotation", o.rotation);
  }
  std::optional<MassiveMask> mask;
  if (!o.mask.empty()) {
    mask = report::read_mask(o.mask);
    m.input("mask", o.mask);
  }
  const ErrorReport r = quant_error(x.values, rotation ? &*rotation : nullptr, cfg, mask ? &*mask : nullptr);
  io::write_text(o.report, report::dump(report::to_json(r)));
  if (!o.csv.empty()) {
    io::write_text(o.csv, report::to_csv(r));
    m.output("csv", o.csv);
  }
  if (!o.svg.empty()) {
    report::emit_scatter_svg(r, mask ? &*mask : nullptr, o.svg);
    m.output("svg", o.svg);
  }
  m.parameters() = o.quant.to_json();
  m.input("activations", o.activations);
  m.output("report", o.report);
  m.results() = {{"mean_sq_error", r.mean_sq_error},
                 {"massive_mean_sq_error", r.massive_mean_sq_error},
                 {"bulk_mean_sq_error", r.bulk_mean_sq_error}};
  m.write(manifest_path(o.manifest, o.report));
  out << "mean_sq_error " << r.mean_sq_error << " (bulk " << r.bulk_mean_sq_error << ", massive "
      << r.massive_mean_sq_error << ")\n";
  return exit_codes::success;
}

struct OptimizeOptions {
  std::string activations;
  std::string mask;
  std::string gamma = "100";
  int iters = kDefaultIterations;
  std::string init = "rh";
  std::uint64_t seed = 0;
  QuantOptions quant;
  std::string out;
  std::string trace;
  std::string trace_csv;
  bool no_det_fix = false;
  bool early_stop = false;
  std::string manifest;
};

int run_optimize(const OptimizeOptions& o, std::ostream& out) {
  Manifest m("optimize");
  OptimizerConfig cfg;
  cfg.gamma = parse_gamma(o.gamma);
  cfg.iterations = o.iters;
  cfg.seed = o.seed;
  cfg.quant = o.quant.config();
  cfg.enforce_det_plus_one = !o.no_det_fix;
  cfg.early_stop = o.early_stop;
  if (o.init == "rh") {
    cfg.init = InitKind::hadamard_randomized;
  } else if (o.init == "ro") {
    cfg.init = InitKind::orthogonal_random;
  } else if (o.init.rfind("file:", 0) == 0) {
    cfg.init = InitKind::from_file;
    cfg.initial = io::read_dfrm(o.init.substr(5));
    m.input("initial_rotation", o.init.substr(5));
  } else {
    throw Error(ErrorCode::usage, "--init must be rh, ro or file:PATH");
  }

  const TokenMatrix x = io::read_dfat(o.activations);
  const MassiveMask mask = report::read_mask(o.mask);
  const OptimizeResult result = optimize(x.values, mask, cfg);

  io::write_dfrm(result.rotation, o.out);
  if (!o.trace.empty()) {
    io::write_text(o.trace, report::trace_jsonl(result.trace));
    m.output("trace", o.trace);
  }
  if (!o.trace_csv.empty()) {
    io::write_text(o.trace_csv, report::trace_csv(result.trace));
    m.output("trace_csv", o.trace_csv);
  }

  m.parameters() = {{"gamma", report::gamma_json(cfg.gamma)},
                    {"iters", cfg.iterations},
                    {"init", o.init},
                    {"quant", o.quant.to_json()},
                    {"enforce_det_plus_one", cfg.enforce_det_plus_one},
                    {"early_stop", cfg.early_stop}};
  m.seed(o.seed);
  m.input("activations", o.activations);
  m.input("mask", o.mask);
  m.output("rotation", o.out);
  const auto& trace = result.trace;
  const double initial = trace.per_iteration.front().weighted_loss_before_rotation_step;
  m.results() = {{"initial_weighted_loss", initial},
                 {"best_weighted_loss", trace.best_loss.weighted},
                 {"best_iteration", trace.best_iteration},
                 {"iterations_run", trace.per_iteration.size()}};
  m.write(manifest_path(o.manifest, o.out));
  out << "weighted loss " << initial << " -> " << trace.best_loss.weighted << " (best iterate "
      << trace.best_iteration << "), rotation written to " << o.out << "\n";
  return exit_codes::success;
}

struct InvarianceOptions {
  InvarianceSettings settings;
  double tol = 1e-9;
  std::optional<int> quant_bits;
  std::string dump_weights;
  std::string manifest;
};

int run_invariance_cmd(const InvarianceOptions& o, std::ostream& out, std::ostream& err) {
  Manifest m("invariance");
  InvarianceSettings s = o.settings;
  s.quant_bits = o.quant_bits;
  const InvarianceReport r = run_invariance(s);
  if (!o.dump_weights.empty()) {
    io::write_weights(random_toy_weights(s.dim, s.hidden, s.vocab, s.seed), o.dump_weights);
    m.output("weights", o.dump_weights);
  }

  out << "block deviation    " << r.block_deviation << "\n"
      << "2-block deviation  " << r.stack_deviation << "\n"
      << "lm_head deviation  " << r.lm_head_deviation << "\n";
  if (r.drift_rh && r.drift_ro) {
    out << "quantized drift RH " << *r.drift_rh << "\n"
        << "quantized drift RO " << *r.drift_ro << "\n";
  }
  const double worst = std::max({r.block_deviation, r.stack_deviation, r.lm_head_deviation});
  const bool ok = worst <= o.tol;

  m.parameters() = {{"dim", s.dim},     {"hidden", s.hidden}, {"tokens", s.tokens},
                    {"vocab", s.vocab}, {"tol", o.tol},       {"quant_bits", o.quant_bits ? json(*o.quant_bits) : json(nullptr)}};
  m.seed(s.seed);
  m.results() = {{"block_deviation", r.block_deviation},
                 {"stack_deviation", r.stack_deviation},
                 {"lm_head_deviation", r.lm_head_deviation},
                 {"passed", ok}};
  if (r.drift_rh) m.results()["drift_rh"] = *r.drift_rh;
  if (r.drift_ro) m.results()["drift_ro"] = *r.drift_ro;
  if (!o.manifest.empty()) m.write(o.manifest);

  if (!ok) {
    err << "invariance violated: max relative deviation " << worst << " > tol " << o.tol << "\n";
    return exit_codes::invariance;
  }
  out << "invariance holds within " << o.tol << "\n";
  return exit_codes::success;
}

void apply_thread_env() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation construction and optimization for low-bit activation quantization", "dfrot"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenRotOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-rot", "generate a randomized Hadamard or random orthogonal rotation");
  gen_cmd->add_option("--dim", gen.dim, "rotation size C")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--kind", gen.kind, "rh (randomized Hadamard) or ro (random orthogonal)")
      ->capture_default_str()
      ->check(CLI::IsMember({"rh", "ro"}));
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output DFRM file")->required();
  gen_cmd->add_option("--dtype", gen.dtype, "f64 or f32")->capture_default_str()->check(CLI::IsMember({"f64", "f32"}));
  gen_cmd->add_flag("--enforce-det", gen.enforce_det, "negate the last column if det = -1");
  gen_cmd->add_option("--manifest", gen.manifest, "manifest path (default <out>.manifest.json)");

  SynthOptions syn;
  auto* syn_cmd = app.add_subcommand("synth", "generate synthetic activations with outlier channels and massive tokens");
  syn_cmd->add_option("--tokens", syn.spec.tokens, "token count T")->capture_default_str();
  syn_cmd->add_option("--dim", syn.spec.dim, "channel count C")->capture_default_str();
  syn_cmd->add_option("--outlier-channels", syn.spec.outlier_channels, "number of amplified channels")
      ->capture_default_str();
  syn_cmd->add_option("--outlier-scale", syn.spec.outlier_scale, "amplification of outlier channels")
      ->capture_default_str();
  syn_cmd->add_option("--massive-count", syn.spec.massive_count, "number of massive tokens")->capture_default_str();
  syn_cmd->add_option("--massive-scale", syn.spec.massive_scale, "spike magnitude in units of noise sigma")
      ->capture_default_str();
  syn_cmd->add_option("--noise-sigma", syn.spec.noise_sigma, "bulk Gaussian standard deviation")->capture_default_str();
  syn_cmd->add_flag("--normalize-l2", syn.spec.normalize_l2, "rescale each token to L2 norm sqrt(C)");
  syn_cmd->add_option("--seed", syn.spec.seed, "random seed")->capture_default_str();
  syn_cmd->add_option("--dtype", syn.dtype, "f64 or f32")->capture_default_str()->check(CLI::IsMember({"f64", "f32"}));
  syn_cmd->add_option("--out", syn.out, "output DFAT file")->required();
  syn_cmd->add_option("--mask-out", syn.mask_out, "ground-truth massive-token mask (JSON)");
  syn_cmd->add_option("--manifest", syn.manifest, "manifest path (default <out>.manifest.json)");

  DetectOptions det;
  auto* det_cmd = app.add_subcommand("detect", "flag tokens with massive activations");
  det_cmd->add_option("--activations", det.activations, "input DFAT file")->required();
  det_cmd->add_option("--tau-rel", det.tau_rel, "relative threshold on l_inf over its median")->capture_default_str();
  det_cmd->add_option("--tau-abs", det.tau_abs, "optional absolute l_inf threshold");
  det_cmd->add_option("--out", det.out, "output mask JSON")->required();
  det_cmd->add_option("--manifest", det.manifest, "manifest path (default <out>.manifest.json)");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "per-token quantization error with an optional rotation");
  ev_cmd->add_option("--activations", ev.activations, "input DFAT file")->required();
  ev_cmd->add_option("--rotation", ev.rotation, "DFRM rotation (omit for no rotation)");
  ev.quant.add_to(ev_cmd);
  ev_cmd->add_option("--mask", ev.mask, "massive-token mask JSON");
  ev_cmd->add_option("--report", ev.report, "output report JSON")->required();
  ev_cmd->add_option("--csv", ev.csv, "per-token CSV output");
  ev_cmd->add_option("--svg", ev.svg, "per-token error scatter SVG");
  ev_cmd->add_option("--manifest", ev.manifest, "manifest path (default <report>.manifest.json)");

  OptimizeOptions opt;
  auto* opt_cmd = app.add_subcommand("optimize", "alternating quantize / Procrustes rotation optimization");
  opt_cmd->add_option("--activations", opt.activations, "calibration DFAT file")->required();
  opt_cmd->add_option("--mask", opt.mask, "massive-token mask JSON")->required();
  opt_cmd->add_option("--gamma", opt.gamma, "weight of the massive-token loss, or inf (data-dependent)")
      ->capture_default_str();
  opt_cmd->add_option("--iters", opt.iters, "alternation rounds")->capture_default_str()->check(CLI::PositiveNumber);
  opt_cmd->add_option("--init", opt.init, "rh, ro or file:PATH")->capture_default_str();
  opt_cmd->add_option("--seed", opt.seed, "seed of the initial rotation")->capture_default_str();
  opt.quant.add_to(opt_cmd);
  opt_cmd->add_option("--out", opt.out, "output DFRM file")->required();
  opt_cmd->add_option("--trace", opt.trace, "per-iteration JSON lines");
  opt_cmd->add_option("--trace-csv", opt.trace_csv, "per-iteration CSV");
  opt_cmd->add_flag("--no-det-fix", opt.no_det_fix, "allow reflections (det = -1)");
  opt_cmd->add_flag("--early-stop", opt.early_stop, "stop after 10 rounds of relative change < 1e-8");
  opt_cmd->add_option("--manifest", opt.manifest, "manifest path (default <out>.manifest.json)");

  InvarianceOptions inv;
  auto* inv_cmd = app.add_subcommand("invariance", "check that folding a rotation into a toy block is exact");
  inv_cmd->add_option("--dim", inv.settings.dim, "model width C")->capture_default_str()->check(CLI::PositiveNumber);
  inv_cmd->add_option("--hidden", inv.settings.hidden, "FFN width H")->capture_default_str()->check(CLI::PositiveNumber);
  inv_cmd->add_option("--tokens", inv.settings.tokens, "token count T")->capture_default_str()->check(CLI::PositiveNumber);
  inv_cmd->add_option("--vocab", inv.settings.vocab, "lm_head width V")->capture_default_str()->check(CLI::PositiveNumber);
  inv_cmd->add_option("--seed", inv.settings.seed, "random seed")->capture_default_str();
  inv_cmd->add_option("--tol", inv.tol, "max relative deviation allowed")->capture_default_str();
  inv_cmd->add_option("--quant-bits", inv.quant_bits, "also report quantized drift for RH vs RO")
      ->check(CLI::Range(2, 8));
  inv_cmd->add_option("--dump-weights", inv.dump_weights, "write the toy weights as a DFAB bundle");
  inv_cmd->add_option("--manifest", inv.manifest, "manifest path");

  std::vector<const char*> argv;
  argv.push_back("dfrot");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_codes::success : exit_codes::usage;
  }

  apply_thread_env();
  try {
    if (*gen_cmd) return run_gen_rot(gen, out);
    if (*syn_cmd) return run_synth(syn, out);
    if (*det_cmd) return run_detect(det, out);
    if (*ev_cmd) return run_eval(ev, out);
    if (*opt_cmd) return run_optimize(opt, out);
    if (*inv_cmd) return run_invariance_cmd(inv, out, err);
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_codes::data;
  }
  return exit_codes::usage;
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace dfrot
