// Batch command-line surface: eval, gated-bench, init-weights, match-demo,
// distill-loss, mgiou, synth. JSON lines on stdout by default, --table for
// human-readable tables. Exit codes: 0 ok, 2 input error, 3 invariant violation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "mono3d/mono3d.hpp"

namespace fs = std::filesystem;
using namespace mono3d;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitInvariant = 3;

void emit(const json& j) { std::cout << j.dump() << "\n"; }

RunConfig resolve_config(const std::string& flag) {
  std::string path = flag;
  if (path.empty())
    if (const char* env = std::getenv("MONO3D_CONFIG")) path = env;
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  cfg.validate();
  return cfg;
}

std::vector<std::string> label_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("not a directory: '" + dir.string() + "'");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

Box3D box_from_json(const json& j) {
  Box3D b;
  const auto c = j.at("center").get<std::vector<double>>();
  const auto d = j.at("dims").get<std::vector<double>>();
  if (c.size() != 3 || d.size() != 3) throw ParseError("box needs 3-vectors 'center' and 'dims'");
  b.center = Vec3(c[0], c[1], c[2]);
  b.dims = {d[0], d[1], d[2]};
  if (j.contains("rotation")) {
    const auto r = j.at("rotation").get<std::vector<double>>();
    if (r.size() != 9) throw ParseError("'rotation' needs 9 row-major values");
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r[i];
    try {
      b.rotation = Rotation::from_matrix(m);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what());
    }
  } else {
    b.rotation = yaw_to_rotation(j.at("yaw").get<double>());
  }
  if (!b.valid()) throw ParseError("invalid box");
  return b;
}

// ----------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string gt, pred, config, report, pr_csv;
  int jobs = 1;
  bool table = false;
};

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = resolve_config(a.config);
  const auto stems = label_stems(a.gt);
  if (!fs::is_directory(a.pred)) throw ParseError("prediction directory missing: '" + a.pred + "'");
  auto known = [&](const std::string& t) { return cfg.class_index(t) >= 0; };

  std::vector<std::vector<GroundTruthObject>> gts(stems.size());
  std::vector<std::vector<EvalDetection>> dets(stems.size());
  for (std::size_t i = 0; i < stems.size(); ++i) {
    for (const auto& o : read_kitti_label_file(fs::path(a.gt) / (stems[i] + ".txt")))
      if (known(o.type)) gts[i].push_back({o.type, o.bbox, kitti_to_box3d(o), o.truncated, o.occluded});
    const fs::path pf = fs::path(a.pred) / (stems[i] + ".txt");
    if (!fs::exists(pf)) throw ParseError("missing prediction file '" + pf.string() + "'");
    for (const auto& o : read_kitti_label_file(pf)) {
      if (!o.score) throw ParseError("prediction without score in '" + pf.string() + "'");
      if (known(o.type)) dets[i].push_back({o.type, *o.score, o.bbox, kitti_to_box3d(o)});
    }
  }

  EvalConfig ec;
  ec.classes = cfg.classes;
  ec.iou_thresholds.clear();
  for (const auto& c : cfg.classes) ec.iou_thresholds.push_back(cfg.iou_thresholds.at(c));
  ec.jobs = a.jobs;
  const EvalReport rep = evaluate(dets, gts, ec);
  const json j = report_to_json(rep);
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw ParseError("cannot write '" + a.report + "'");
    out << j.dump(2) << "\n";
  }
  if (!a.pr_csv.empty()) {
    std::ofstream out(a.pr_csv);
    if (!out) throw ParseError("cannot write '" + a.pr_csv + "'");
    out << report_to_csv(rep);
  }
  if (a.table) std::cout << report_to_table(rep);
  else emit(j);
  return 0;
}

// ----------------------------------------------------------------------------
// gated-bench

struct BenchArgs {
  std::string weights, shape = "64,48,160", orientation = "multibin";
  std::size_t k = kTopKKitti;
  int repeat = 3;
  std::uint64_t seed = 0;
  bool table = false;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

OrientationMode parse_mode(const std::string& s) {
  if (s == "multibin") return OrientationMode::kMultiBin;
  if (s == "so3") return OrientationMode::kSO3;
  throw ParseError("orientation must be 'multibin' or 'so3'");
}

int run_bench(const BenchArgs& a) {
  int c = 0, h8 = 0, w8 = 0;
  char tail = 0;
  if (std::sscanf(a.shape.c_str(), "%d,%d,%d%c", &c, &h8, &w8, &tail) != 3 || c < 1 || h8 < 1 || w8 < 1)
    throw ParseError("--shape expects C,H8,W8 with positive integers");
  if (a.repeat < 1) throw ParseError("--repeat must be >= 1");
  const HeadSet hs = a.weights.empty() ? make_random_heads(c, 3, parse_mode(a.orientation), a.seed)
                                       : heads_from_container(read_container(a.weights));
  if (hs.in_channels != c) throw ParseError("weights expect " + std::to_string(hs.in_channels) + " channels");
  const FeatureMapSet f = random_features(c, h8, w8, a.seed + 1);

  std::vector<double> d_cls, d_reg, d_dec, g_cls, g_patch, g_reg, g_dec;
  InferenceResult dense, gated;
  for (int r = 0; r < a.repeat; ++r) {
    dense = infer(f, hs, a.k, InferMode::kDense);
    gated = infer(f, hs, a.k, InferMode::kGated);
    if (dense.centers != gated.centers || dense.raw != gated.raw || !bitwise_equal(dense.detections, gated.detections))
      throw InvariantViolation("gated-bench: gated and dense outputs differ");
    d_cls.push_back(dense.stages.cls_ms), d_reg.push_back(dense.stages.regression_ms);
    d_dec.push_back(dense.stages.decode_ms);
    g_cls.push_back(gated.stages.cls_ms), g_patch.push_back(gated.stages.patch_ms);
    g_reg.push_back(gated.stages.regression_ms), g_dec.push_back(gated.stages.decode_ms);
  }
  const double ratio =
      static_cast<double>(gated.stages.regression_macs) / static_cast<double>(dense.stages.regression_macs);
  const std::vector<json> rows{
      {{"stage", "classification"}, {"dense_macs", dense.stages.cls_macs}, {"gated_macs", gated.stages.cls_macs},
       {"dense_ms", median(d_cls)}, {"gated_ms", median(g_cls)}},
      {{"stage", "patch_extraction"}, {"dense_macs", 0}, {"gated_macs", 0}, {"dense_ms", 0.0},
       {"gated_ms", median(g_patch)}},
      {{"stage", "regression_heads"}, {"dense_macs", dense.stages.regression_macs},
       {"gated_macs", gated.stages.regression_macs}, {"dense_ms", median(d_reg)}, {"gated_ms", median(g_reg)}},
      {{"stage", "decoding"}, {"dense_macs", 0}, {"gated_macs", 0}, {"dense_ms", median(d_dec)},
       {"gated_ms", median(g_dec)}}};
  const json summary{{"equivalence", "PASS"}, {"k", gated.centers.size()}, {"locations", f.num_locations()},
                     {"regression_mac_ratio", ratio}};
  if (a.table) {
    std::printf("%-18s %14s %14s %10s %10s\n", "stage", "dense MACs", "gated MACs", "dense ms", "gated ms");
    for (const auto& r : rows)
      std::printf("%-18s %14llu %14llu %10.3f %10.3f\n", r["stage"].get<std::string>().c_str(),
                  r["dense_macs"].get<unsigned long long>(), r["gated_macs"].get<unsigned long long>(),
                  r["dense_ms"].get<double>(), r["gated_ms"].get<double>());
    std::printf("equivalence PASS, k=%zu of %zu locations, regression MAC ratio %.6f\n", gated.centers.size(),
                f.num_locations(), ratio);
  } else {
    for (const auto& r : rows) emit(r);
    emit(summary);
  }
  return 0;
}

// ----------------------------------------------------------------------------
// init-weights

int run_init(const std::string& out, int channels, int classes, const std::string& mode, std::uint64_t seed) {
  if (channels < 1 || classes < 1) throw ParseError("--channels and --classes must be positive");
  write_container(out, heads_to_container(make_random_heads(channels, classes, parse_mode(mode), seed)));
  emit({{"weights", out}, {"in_channels", channels}, {"num_classes", classes}, {"orientation", mode}});
  return 0;
}

// ----------------------------------------------------------------------------
// match-demo

// Synthetic scene: projected GT boxes plus one jittered prediction per anchor.
struct MatchProblem {
  std::vector<GroundTruth> gts;
  std::vector<Prediction> preds;
  std::vector<AnchorPoint> anchors;
};

MatchProblem make_match_problem(std::uint64_t seed, int n_gt, const RunConfig& cfg) {
  SceneSpec spec;
  spec.seed = seed;
  spec.n_objects = n_gt;
  spec.image_width = cfg.image_width;
  spec.image_height = cfg.image_height;
  const Scene s = generate_scene(spec);
  MatchProblem p;
  p.anchors = make_anchor_grid(cfg.image_width, cfg.image_height);
  for (const auto& o : s.objects) p.gts.push_back({std::max(0, cfg.class_index(o.cls)), o.box2d, o.box3d});
  if (p.gts.empty()) return p;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0, 1);
  const int n_cls = static_cast<int>(cfg.classes.size());
  for (std::size_t a = 0; a < p.anchors.size(); ++a) {
    const auto& g = p.gts[static_cast<std::size_t>(u(rng) * p.gts.size()) % p.gts.size()];
    Prediction pr;
    for (int c = 0; c < n_cls; ++c) pr.class_probs.push_back(u(rng));
    const double jx = 0.2 * g.box2d.width() * (u(rng) - 0.5), jy = 0.2 * g.box2d.height() * (u(rng) - 0.5);
    pr.box2d = {g.box2d.x1 + jx, g.box2d.y1 + jy, g.box2d.x2 + jx, g.box2d.y2 + jy};
    pr.box3d = g.box3d;
    pr.box3d.center += Vec3(u(rng) - 0.5, 0.2 * (u(rng) - 0.5), 2 * (u(rng) - 0.5));
    pr.box3d.rotation = yaw_to_rotation(rotation_to_yaw(g.box3d.rotation) + 0.4 * (u(rng) - 0.5));
    p.preds.push_back(pr);
  }
  return p;
}

int run_match(const std::string& config, std::uint64_t seed, int n_gt, const std::string& mode, bool table) {
  const RunConfig cfg = resolve_config(config);
  if (n_gt < 0) throw ParseError("--gts must be >= 0");
  if (mode != "one-to-one" && mode != "one-to-many") throw ParseError("--mode must be one-to-one or one-to-many");
  const MatchProblem p = make_match_problem(seed, n_gt, cfg);
  const auto res = assign(p.gts, p.preds, p.anchors, cfg.match,
                          mode == "one-to-one" ? AssignMode::kOneToOne : AssignMode::kOneToMany);
  if (table) {
    std::printf("%4s %7s %7s %6s %6s %10s\n", "gt", "anchor", "stride", "row", "col", "score");
    for (const auto& m : res.pairs) {
      const auto& a = p.anchors[m.anchor];
      std::printf("%4d %7d %7d %6d %6d %10.6f\n", m.gt, m.anchor, a.stride, a.row, a.col, m.score);
    }
    return 0;
  }
  json pairs = json::array();
  for (const auto& m : res.pairs) pairs.push_back({{"gt", m.gt}, {"anchor", m.anchor}, {"score", m.score}});
  emit({{"seed", seed}, {"n_gt", p.gts.size()}, {"n_anchors", p.anchors.size()}, {"pairs", pairs},
        {"unmatched_gt", res.unmatched_gt}});
  return 0;
}

// ----------------------------------------------------------------------------
// distill-loss

int run_distill(const std::string& teacher, const std::string& student, const std::string& weights,
                const std::string& config) {
  const RunConfig cfg = resolve_config(config);
  const auto t = read_features(teacher);
  const auto s = read_features(student);
  std::map<std::pair<int, int>, const FeatureRecord*> by_key;
  for (const auto& r : t)
    if (!by_key.emplace(std::pair{r.image, r.instance}, &r).second) throw ParseError("duplicate teacher instance");

  std::vector<double> w(kDepthFeatureDim, 1.0);
  if (!weights.empty()) {
    const auto c = read_container(weights);
    const auto& wt = c.at("w_final");
    if (wt.data.size() != kDepthFeatureDim) throw ParseError("w_final must hold 64 values");
    w.assign(wt.data.begin(), wt.data.end());
  }
  const ImportanceWeights omega = importance_omega(w);

  std::vector<DistillPair> pairs;
  std::vector<double> etas;
  for (const auto& r : s) {
    const auto it = by_key.find({r.image, r.instance});
    if (it == by_key.end()) continue;
    DistillPair p;
    for (int q = 0; q < kDepthFeatureDim; ++q) {
      p.feat_teacher[q] = it->second->feature[q];
      p.feat_student[q] = r.feature[q];
    }
    p.z_gt = r.gt_depth;
    p.z_teacher = it->second->pred_depth;
    p.image = r.image, p.instance = r.instance;
    etas.push_back(quality_eta(p.z_gt, p.z_teacher, cfg.distill));
    pairs.push_back(p);
  }
  const double value = pairs.empty() ? 0.0 : distill_loss(pairs, omega, etas).value;
  emit({{"loss", value}, {"pairs", pairs.size()}, {"unpaired_student", s.size() - pairs.size()}});
  return 0;
}

// ----------------------------------------------------------------------------
// mgiou

int run_mgiou(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double v = 0;
    try {
      const json j = json::parse(line);
      v = mgiou_3d(box_from_json(j.at("a")), box_from_json(j.at("b")));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), no);
    }
    emit({{"line", no}, {"mgiou", v}});
  }
  return 0;
}

// ----------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  int images = 10, objects = 6;
  std::uint64_t seed = 0;
  bool features = false;
  NoiseSpec noise;
};

int run_synth(const SynthArgs& a) {
  if (a.images < 0) throw ParseError("--images must be >= 0");
  a.noise.validate();
  const fs::path root(a.out);
  for (const char* d : {"label_2", "pred", "calib"}) fs::create_directories(root / d);
  std::size_t n_obj = 0, n_det = 0;
  std::vector<FeatureRecord> feats;
  std::mt19937_64 feat_rng(a.seed + 11);
  std::normal_distribution<float> n01(0, 1);
  for (int i = 0; i < a.images; ++i) {
    SceneSpec spec;
    spec.seed = a.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    spec.n_objects = a.objects;
    const Scene s = generate_scene(spec);
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06d", i);
    std::vector<KittiObject> gt, pred;
    for (const auto& o : s.objects)
      gt.push_back(box3d_to_kitti(o.cls, o.box2d, o.box3d, std::nullopt, o.truncation, o.occlusion));
    for (const auto& d : perturb(s.objects, a.noise, s.intrinsics, spec.seed + 7))
      pred.push_back(box3d_to_kitti(d.cls, d.box2d, d.box3d, d.confidence));
    write_kitti_label_file(root / "label_2" / (std::string(stem) + ".txt"), gt);
    write_kitti_label_file(root / "pred" / (std::string(stem) + ".txt"), pred);
    std::ofstream(root / "calib" / (std::string(stem) + ".txt")) << format_kitti_calib(s.intrinsics);
    n_obj += gt.size(), n_det += pred.size();
    if (!a.features) continue;
    for (std::size_t j = 0; j < s.objects.size(); ++j) {
      FeatureRecord r;
      r.image = i;
      r.instance = static_cast<int>(j);
      for (auto& v : r.feature) v = n01(feat_rng);
      r.gt_depth = static_cast<float>(s.objects[j].box3d.center.z());
      r.pred_depth = r.gt_depth + static_cast<float>(a.noise.sigma_z) * n01(feat_rng);
      feats.push_back(r);
    }
  }
  if (a.features) write_features((root / "features.bin").string(), feats);
  emit({{"out", a.out}, {"images", a.images}, {"objects", n_obj}, {"detections", n_det}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular 3D detection toolkit"};
  app.require_subcommand(1);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "KITTI AP|R40 evaluation of a prediction directory");
  eval->add_option("--gt", ea.gt, "ground-truth label directory")->required();
  eval->add_option("--pred", ea.pred, "prediction label directory")->required();
  eval->add_option("--config", ea.config, "JSON config (default: $MONO3D_CONFIG)");
  eval->add_option("--jobs", ea.jobs, "worker threads")->check(CLI::PositiveNumber);
  eval->add_option("--report", ea.report, "write the JSON report here");
  eval->add_option("--pr-csv", ea.pr_csv, "write the sampled PR curves here");
  eval->add_flag("--table", ea.table, "print a table instead of JSON");

  BenchArgs ba;
  auto* bench = app.add_subcommand("gated-bench", "dense vs gated regression heads: equivalence, MACs, time");
  bench->add_option("--weights", ba.weights, "head weight container (default: random heads from --seed)");
  bench->add_option("--shape", ba.shape, "C,H8,W8 of the stride-8 map");
  bench->add_option("--k", ba.k, "number of selected centers");
  bench->add_option("--repeat", ba.repeat, "timing repetitions");
  bench->add_option("--seed", ba.seed, "seed for features and random heads");
  bench->add_option("--orientation", ba.orientation, "multibin or so3 (random heads only)");
  bench->add_flag("--table", ba.table, "print a table instead of JSON");

  std::string init_out, init_mode = "multibin";
  int init_c = 64, init_classes = 3;
  std::uint64_t init_seed = 0;
  auto* init = app.add_subcommand("init-weights", "write random head weights");
  init->add_option("--out", init_out, "output container")->required();
  init->add_option("--channels", init_c, "input channels");
  init->add_option("--classes", init_classes, "number of classes");
  init->add_option("--orientation", init_mode, "multibin or so3");
  init->add_option("--seed", init_seed, "seed");

  std::string match_cfg, match_mode = "one-to-one";
  std::uint64_t match_seed = 0;
  int match_gts = 3;
  bool match_table = false;
  auto* match = app.add_subcommand("match-demo", "label assignment on a synthetic scene");
  match->add_option("--config", match_cfg, "JSON config (default: $MONO3D_CONFIG)");
  match->add_option("--seed", match_seed, "scene seed");
  match->add_option("--gts", match_gts, "number of ground-truth objects");
  match->add_option("--mode", match_mode, "one-to-one or one-to-many");
  match->add_flag("--table", match_table, "print a table instead of JSON");

  std::string dl_teacher, dl_student, dl_weights, dl_cfg;
  auto* dl = app.add_subcommand("distill-loss", "weighted feature-imitation loss between two feature dumps");
  dl->add_option("--teacher", dl_teacher, "teacher feature dump")->required();
  dl->add_option("--student", dl_student, "student feature dump")->required();
  dl->add_option("--weights", dl_weights, "container with tensor w_final[64] (default: uniform)");
  dl->add_option("--config", dl_cfg, "JSON config (default: $MONO3D_CONFIG)");

  std::string mg_pairs;
  auto* mg = app.add_subcommand("mgiou", "MGIoU for JSON-lines box pairs");
  mg->add_option("--pairs", mg_pairs, "JSON lines {\"a\": box, \"b\": box}")->required();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic KITTI-format dataset with perturbed predictions");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--images", sa.images, "number of images");
  synth->add_option("--objects", sa.objects, "objects per image");
  synth->add_option("--seed", sa.seed, "seed");
  synth->add_flag("--features", sa.features, "also write a depth-feature dump (features.bin)");
  synth->add_option("--sigma-z", sa.noise.sigma_z, "depth noise [m]");
  synth->add_option("--sigma-dims", sa.noise.sigma_dims, "dimension noise [m]");
  synth->add_option("--sigma-yaw", sa.noise.sigma_yaw, "yaw noise [rad]");
  synth->add_option("--sigma-center", sa.noise.sigma_center, "lateral/vertical noise [m]");
  synth->add_option("--fp-rate", sa.noise.fp_rate, "false positives per object");
  synth->add_option("--fn-rate", sa.noise.fn_rate, "drop probability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*eval) return run_eval(ea);
    if (*bench) return run_bench(ba);
    if (*init) return run_init(init_out, init_c, init_classes, init_mode, init_seed);
    if (*match) return run_match(match_cfg, match_seed, match_gts, match_mode, match_table);
    if (*dl) return run_distill(dl_teacher, dl_student, dl_weights, dl_cfg);
    if (*mg) return run_mgiou(mg_pairs);
    if (*synth) return run_synth(sa);
  } catch (const InvariantViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what();
    if (e.line()) std::cerr << " (line " << e.line() << ")";
    std::cerr << "\n";
    return kExitInput;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return 0;
}
