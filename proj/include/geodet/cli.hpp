#pragma once

// Command-line front end. Subcommands: synth, eval, warp, ensemble,
// gradcheck, toytrain.
//
// Exit codes: 0 success, 1 other error, 2 parse error, 3 schema/version
// mismatch, 4 usage error, 5 check failure.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geodet/datasets.hpp"
#include "geodet/ensemble.hpp"
#include "geodet/eval3d.hpp"
#include "geodet/featgrid.hpp"
#include "geodet/toynet.hpp"

namespace geodet::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseError = 2,
  kSchemaError = 3,
  kUsageError = 4,
  kCheckFailed = 5,
};

class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

/// Fixed-width result table: percentages (2 decimals) then fractions.
inline std::string format_table(const EvalResult& r) {
  const auto cell = [](const std::optional<double>& v, double scale, int dec) {
    std::string s = v ? fixed(*v * scale, dec) : std::string("-");
    return std::string(10 > s.size() ? 10 - s.size() : 0, ' ') + s;
  };
  std::string out;
  out += "            AP3D   AP3D@15   AP3D@25   AP3D@50\n";
  out += "percent " + cell(r.ap3d_mean, 100.0, 2) + cell(r.at(0.15), 100.0, 2) +
         cell(r.at(0.25), 100.0, 2) + cell(r.at(0.50), 100.0, 2) + "\n";
  out += "fraction" + cell(r.ap3d_mean, 1.0, 4) + cell(r.at(0.15), 1.0, 4) +
         cell(r.at(0.25), 1.0, 4) + cell(r.at(0.50), 1.0, 4) + "\n";
  if (!r.per_category.empty()) {
    out += "\ncategory              AP3D\n";
    for (const auto& [cat, ap] : r.per_category) {
      std::string name = cat.substr(0, 16);
      name.resize(16, ' ');
      out += name + cell(ap, 100.0, 2) + "\n";
    }
  }
  return out;
}

inline std::string result_document(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["ap3d_mean"] = r.ap3d_mean;
  j["ap3d_mean_category_first"] = r.ap3d_mean_category_first;
  j["thresholds"] = r.thresholds;
  auto& per_t = j["ap_per_threshold"] = nlohmann::ordered_json::array();
  for (const auto& [t, ap] : r.ap_per_threshold) per_t.push_back({{"threshold", t}, {"ap", ap}});
  auto& per_c = j["per_category"] = nlohmann::ordered_json::object();
  for (const auto& [cat, ap] : r.per_category) per_c[cat] = ap;
  for (const auto& [key, t] : {std::pair{"ap3d_at_15", 0.15}, {"ap3d_at_25", 0.25}, {"ap3d_at_50", 0.50}})
    if (const auto v = r.at(t)) j[key] = *v;
  return j.dump(2) + "\n";
}

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw UsageError(std::string(name) + " must be positive");
}

}  // namespace detail

struct SynthOptions {
  std::uint64_t seed = 0;
  int objects = 10;
  std::string vocab;
  std::string out;
  std::string predictions_out;
  std::uint64_t prediction_seed = 1;
  PerturbConfig perturb;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
  const auto vocab = o.vocab.empty() ? default_vocabulary() : detail::split(o.vocab, ',');
  SceneRecord scene = gen_scene(o.seed, o.objects, vocab);
  write_scene(scene, o.out);
  out << "wrote " << o.out << " (" << scene.objects.size() << " objects)\n";
  if (!o.predictions_out.empty()) {
    SceneRecord preds = scene;
    preds.detections = perturb_predictions(scene, o.perturb, o.prediction_seed);
    write_scene(preds, o.predictions_out);
    out << "wrote " << o.predictions_out << " (" << preds.detections->size() << " detections)\n";
  }
  return kOk;
}

struct EvalOptions {
  std::string predictions;
  std::string ground_truth;
  std::vector<double> thresholds;
  std::string out;
};

inline int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const SceneRecord pred = read_scene(o.predictions);
  const SceneRecord gt = read_scene(o.ground_truth);
  if (!pred.detections)
    throw SchemaError(o.predictions, "prediction file has no detections array");
  const auto gts = ground_truth(gt);
  const EvalResult r = o.thresholds.empty() ? ap3d(*pred.detections, gts)
                                            : ap3d(*pred.detections, gts, o.thresholds);
  out << detail::format_table(r);
  if (!o.out.empty()) write_file_atomic(o.out, detail::result_document(r));
  return kOk;
}

struct WarpOptions {
  std::string in;
  std::string out;
  double fx = 0.0, fy = 0.0;
  std::optional<double> px, py;
  std::optional<int> width, height;
  std::vector<double> R;
  std::vector<double> t{0.0, 0.0, 0.0};
  std::string rot_axis;
  double rot_deg = 0.0;
  WarpConfig warp;
  bool planar_fixture = false;
  int fixture_size = 64;
  int fixture_channels = 8;
};

inline int cmd_warp(const WarpOptions& o, std::ostream& out) {
  if (o.planar_fixture) {
    const auto fx = make_planar_warp_fixture(o.fixture_size, o.fixture_channels);
    const FeatureGrid warped = epipolar_warp(fx.source, fx.K, fx.K, fx.T, o.warp);
    const double err = mean_feature_error(warped, fx.target, fx.valid);
    std::size_t n_valid = 0;
    for (bool v : fx.valid) n_valid += v;
    out << "planar fixture " << o.fixture_size << "x" << o.fixture_size << "x" << o.fixture_channels
        << ": mean warp error " << detail::fixed(err, 9) << " over " << n_valid << " pixels\n";
    if (!o.out.empty()) {
      std::ostringstream bin;
      write_grid(bin, warped);
      write_file_atomic(o.out, bin.str());
    }
    return err <= 1e-3 ? kOk : kCheckFailed;
  }
  if (o.in.empty() || o.out.empty()) throw UsageError("warp needs --in and --out");
  const FeatureGrid src = read_grid_file(o.in);

  CameraIntrinsics K;
  K.width = o.width.value_or(src.width());
  K.height = o.height.value_or(src.height());
  K.fx = o.fx;
  K.fy = o.fy;
  K.px = o.px.value_or(0.5 * (K.width - 1));
  K.py = o.py.value_or(0.5 * (K.height - 1));
  try {
    K.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  RigidTransform T;
  if (!o.R.empty()) {
    if (o.R.size() != 9) throw UsageError("--R needs 9 values");
    std::array<double, 9> r;
    std::copy(o.R.begin(), o.R.end(), r.begin());
    T.R = Mat3d::from_rows(r);
  } else if (!o.rot_axis.empty()) {
    const int axis = o.rot_axis == "x" ? 0 : o.rot_axis == "y" ? 1 : o.rot_axis == "z" ? 2 : -1;
    if (axis < 0) throw UsageError("--rot-axis must be x, y or z");
    T.R = axis_rotation(axis, deg_to_rad(o.rot_deg));
  }
  if (o.t.size() != 3) throw UsageError("--t needs 3 values");
  T.t = {o.t[0], o.t[1], o.t[2]};
  try {
    T.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  const FeatureGrid warped = epipolar_warp(src, K, K, T, o.warp);
  std::ostringstream bin;
  write_grid(bin, warped);
  write_file_atomic(o.out, bin.str());
  out << "wrote " << o.out << " (" << warped.height() << "x" << warped.width() << "x"
      << warped.channels() << ")\n";
  return kOk;
}

struct EnsembleOptions {
  std::vector<std::string> predictions;
  std::string poses;
  double tau = kDefaultNmsThreshold;
  std::string out;
};

inline int cmd_ensemble(const EnsembleOptions& o, std::ostream& out) {
  const auto poses = poses_from_string(read_file(o.poses), o.poses);
  if (poses.size() != o.predictions.size())
    throw UsageError("got " + std::to_string(o.predictions.size()) + " prediction files but " +
                     std::to_string(poses.size()) + " poses");
  if (!(o.tau > 0.0 && o.tau < 1.0)) throw UsageError("--tau must lie in (0, 1)");
  std::vector<ViewPredictions> views;
  std::optional<SceneRecord> base;
  std::size_t n_in = 0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    SceneRecord s = read_scene(o.predictions[i]);
    if (!s.detections)
      throw SchemaError(o.predictions[i], "prediction file has no detections array");
    n_in += s.detections->size();
    views.push_back({poses[i], *s.detections});
    if (!base) base = std::move(s);
  }
  SceneRecord fused = *base;
  fused.detections = fuse_views(views, o.tau);
  write_scene(fused, o.out);
  out << "fused " << n_in << " boxes from " << views.size() << " views into "
      << fused.detections->size() << "\n";
  return kOk;
}

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int cases = 100;
  bool corrupt = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

inline int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  if (o.cases < 1) throw UsageError("--cases must be at least 1");
  const auto rep = gradient_check(o.seed, o.cases, 1e-5, o.corrupt);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "gradcheck: %d cases, max relative error %.3e (case %d), tolerance %.0e\n",
                rep.cases, rep.max_relative_error, rep.worst_case, kGradcheckTolerance);
  out << buf;
  return rep.max_relative_error <= kGradcheckTolerance ? kOk : kCheckFailed;
}

struct ToytrainOptions {
  std::uint64_t seed = 0;
  int steps = 5000;
  double lr = 1e-2;
  double perturbation = 0.05;
  std::string weights_out;
};

/// Fits cube-head parameters to a synthetic ground-truth box from a perturbed
/// start, and optionally dumps freshly initialized toy-network weights.
inline int cmd_toytrain(const ToytrainOptions& o, std::ostream& out) {
  if (o.steps < 0) throw UsageError("--steps must be non-negative");
  detail::require_positive(o.lr, "--lr");
  Rng rng(o.seed);
  const GradCheckCase c = random_gradcheck_case(rng);
  auto a = encode_cuboid(c.gt, c.roi, c.K).to_array();
  for (auto& e : a) e *= 1.0 + rng.uniform(-o.perturbation, o.perturbation);
  const CuboidParams init = CuboidParams::from_array(a);
  const auto start = detection_loss(init, c.gt, c.roi, c.K);
  const FitResult r = fit_cuboid(c.gt, c.roi, c.K, init, o.steps, o.lr);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "toytrain: %d steps, lr %.3g: corner L1 %.6f -> %.6f, mu %.6f -> %.6f, total %.6f -> %.6f%s\n",
                r.steps_run, o.lr, start.l_3d, r.final_loss.l_3d, start.mu, r.final_loss.mu,
                start.total, r.final_loss.total, r.diverged ? " (diverged)" : "");
  out << buf;
  if (!o.weights_out.empty()) {
    write_weights(o.weights_out, ToyNet::init({}, o.seed));
    out << "wrote " << o.weights_out << " and " << o.weights_out << ".json\n";
  }
  return kOk;
}

/// Parses arguments and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"geodet: epipolar feature warping, cuboid decoding and AP3D evaluation"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic scene (and optional predictions)");
  s->add_option("--seed", synth.seed, "scene seed")->capture_default_str();
  s->add_option("--objects", synth.objects, "number of objects")->capture_default_str();
  s->add_option("--vocab", synth.vocab, "comma-separated categories");
  s->add_option("--out", synth.out, "scene file to write")->required();
  s->add_option("--predictions-out", synth.predictions_out, "perturbed prediction file to write");
  s->add_option("--prediction-seed", synth.prediction_seed, "perturbation seed")->capture_default_str();
  s->add_option("--sigma-center", synth.perturb.sigma_center, "center noise (m)")->capture_default_str();
  s->add_option("--sigma-dims", synth.perturb.sigma_dims, "log-dimension noise")->capture_default_str();
  s->add_option("--sigma-rot", synth.perturb.sigma_rot_deg, "rotation noise (deg)")->capture_default_str();
  s->add_option("--drop", synth.perturb.drop_rate, "fraction of objects dropped")->capture_default_str();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "AP3D of predictions against ground truth");
  e->add_option("--pred", ev.predictions, "prediction scene file")->required();
  e->add_option("--gt", ev.ground_truth, "ground-truth scene file")->required();
  e->add_option("--thresholds", ev.thresholds, "IoU3D thresholds (default 0.05..0.50)")->delimiter(',');
  e->add_option("--out", ev.out, "JSON result document to write");

  WarpOptions wp;
  std::string mode = "mean", policy = "zero";
  auto* w = app.add_subcommand("warp", "epipolar warp of a feature grid");
  w->add_option("--in", wp.in, "source grid (binary)");
  w->add_option("--out", wp.out, "warped grid to write");
  w->add_option("--fx", wp.fx, "focal length x (px)");
  w->add_option("--fy", wp.fy, "focal length y (px)");
  w->add_option("--px", wp.px, "principal point x (default: center)");
  w->add_option("--py", wp.py, "principal point y (default: center)");
  w->add_option("--width", wp.width, "image width the intrinsics refer to (default: grid width)");
  w->add_option("--height", wp.height, "image height (default: grid height)");
  w->add_option("--R", wp.R, "source-to-target rotation, 9 row-major values")->delimiter(',');
  w->add_option("--t", wp.t, "source-to-target translation, 3 values")->delimiter(',');
  w->add_option("--rot-axis", wp.rot_axis, "rotation axis x|y|z (alternative to --R)");
  w->add_option("--rot-deg", wp.rot_deg, "rotation angle in degrees");
  w->add_option("--samples", wp.warp.n_samples, "samples per epipolar line")->capture_default_str();
  w->add_option("--mode", mode, "aggregator: mean|max")->capture_default_str();
  w->add_option("--policy", policy, "out-of-view policy: zero|nearest")->capture_default_str();
  w->add_flag("--planar-fixture", wp.planar_fixture, "warp the built-in planar scene and report the error");
  w->add_option("--fixture-size", wp.fixture_size, "planar fixture grid size")->capture_default_str();
  w->add_option("--fixture-channels", wp.fixture_channels, "planar fixture channels")->capture_default_str();

  EnsembleOptions en;
  auto* n = app.add_subcommand("ensemble", "fuse per-view predictions with 3D NMS");
  n->add_option("--pred", en.predictions, "prediction file per view (repeatable)")->required();
  n->add_option("--poses", en.poses, "pose file, one pose per prediction file")->required();
  n->add_option("--tau", en.tau, "NMS IoU3D threshold")->capture_default_str();
  n->add_option("--out", en.out, "fused prediction file")->required();

  GradcheckOptions gc;
  auto* g = app.add_subcommand("gradcheck", "loss gradient vs central finite differences");
  g->add_option("--seed", gc.seed, "case seed")->capture_default_str();
  g->add_option("--cases", gc.cases, "number of random cases")->capture_default_str();
  g->add_flag("--corrupt-gradient", gc.corrupt, "perturb the analytic gradient (negative control)")
      ->group("");

  ToytrainOptions tt;
  auto* t = app.add_subcommand("toytrain", "gradient-descent fit of cube-head parameters");
  t->add_option("--seed", tt.seed, "seed")->capture_default_str();
  t->add_option("--steps", tt.steps, "descent steps")->capture_default_str();
  t->add_option("--lr", tt.lr, "learning rate")->capture_default_str();
  t->add_option("--perturbation", tt.perturbation, "relative init perturbation")->capture_default_str();
  t->add_option("--weights-out", tt.weights_out, "dump toy network weights here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return pe.get_exit_code() == 0 ? kOk : (code == 0 ? kOk : kUsageError);
  }

  try {
    if (mode == "mean")
      wp.warp.mode = AggregatorMode::Mean;
    else if (mode == "max")
      wp.warp.mode = AggregatorMode::Max;
    else
      throw UsageError("--mode must be mean or max");
    if (policy == "zero")
      wp.warp.out_of_view_policy = OutOfViewPolicy::Zero;
    else if (policy == "nearest")
      wp.warp.out_of_view_policy = OutOfViewPolicy::Nearest;
    else
      throw UsageError("--policy must be zero or nearest");
    if (wp.warp.n_samples < 2) throw UsageError("--samples must be at least 2");

    if (*s) return cmd_synth(synth, out);
    if (*e) return cmd_eval(ev, out);
    if (*w) return cmd_warp(wp, out);
    if (*n) return cmd_ensemble(en, out);
    if (*g) return cmd_gradcheck(gc, out);
    if (*t) return cmd_toytrain(tt, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsageError;
  } catch (const SchemaError& ex) {
    err << "schema error: " << ex.what() << "\n";
    return kSchemaError;
  } catch (const VersionMismatch& ex) {
    err << "version mismatch: " << ex.what() << "\n";
    return kSchemaError;
  } catch (const ParseError& ex) {
    err << "parse error: " << ex.what() << "\n";
    return kParseError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kUsageError;
}

}  // namespace geodet::cli
