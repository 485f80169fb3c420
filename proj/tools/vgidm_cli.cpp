// Command-line harness: data generation, training, evaluation, ablations,
// applications and theory checks. Every command is reproducible from
// (config, seed) and writes its reports under --out.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vgidm/vgidm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vgidm;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  std::string extra;
  for (const auto& kv : c.overrides) extra += kv + "\n";
  if (!extra.empty()) cfg = parse_config(extra, cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.out = *c.out;
  fs::create_directories(cfg.out);
  return cfg;
}

json report_header(const RunConfig& cfg, const std::string& command) {
  return {{"command", command},
          {"code_version", kCodeVersion},
          {"config_hash", "fnv1a64:" + config_hash(cfg)},
          {"seed", cfg.seed}};
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << "\n";
}

Dataset dataset_of(const RunConfig& cfg) {
  if (!cfg.manifest.empty()) return load_dataset(cfg.manifest, {cfg.patch_size});
  return build_pair_dataset(cfg.synth, cfg.seed);
}

fs::path sidecar_of(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".config.json");
  return p;
}

void save_model(const MatchModel& m, const fs::path& path) {
  save_params(m.params, path);
  write_json(sidecar_of(path), model_config_json(m.config));
}

MatchModel load_model(const fs::path& path) {
  std::ifstream in(sidecar_of(path));
  if (!in) throw CheckpointError("missing model config next to " + path.string());
  MatchModel m;
  m.config = model_config_from_json(json::parse(in));
  m.params = load_params(path);
  return m;
}

MatchModel model_for(const RunConfig& cfg, const std::string& checkpoint, const Dataset& ds) {
  if (!checkpoint.empty()) return load_model(checkpoint);
  MatchModel m = make_model(cfg.model, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  train(m, ds, tc);
  return m;
}

const char* kMetricsHeader = "variant,precision,recall,f1,auc,accuracy,tp,fp,tn,fn";

std::string metrics_row(const std::string& name, const Metrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << name << "," << m.precision << "," << m.recall << "," << m.f1 << "," << m.auc << "," << m.accuracy << ","
     << m.tp << "," << m.fp << "," << m.tn << "," << m.fn;
  return os.str();
}

json metrics_json(const Metrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall},   {"f1", m.f1},
          {"auc", m.auc},             {"accuracy", m.accuracy}, {"tp", m.tp},
          {"fp", m.fp},               {"tn", m.tn},           {"fn", m.fn},
          {"undefined",
           {{"precision", m.precision_undefined},
            {"recall", m.recall_undefined},
            {"f1", m.f1_undefined},
            {"auc", m.auc_undefined}}}};
}

int cmd_synth(const Common& c, const std::string& kind) {
  const RunConfig cfg = resolve(c);
  Dataset ds;
  if (kind == "pairs") ds = build_pair_dataset(cfg.synth, cfg.seed);
  else if (kind == "route") ds = build_route_dataset(cfg.route, cfg.seed);
  else if (kind == "stereo") ds = build_stereo_dataset(cfg.stereo, cfg.seed);
  else throw std::invalid_argument("unknown dataset kind '" + kind + "'");
  const fs::path dir = fs::path(cfg.out) / "dataset";
  save_dataset(ds, dir);
  json r = report_header(cfg, "synth");
  r["kind"] = kind;
  r["manifest"] = (dir / "manifest.jsonl").string();
  r["frames"] = ds.frames.size();
  r["patches"] = ds.patch_count();
  r["train_pairs"] = ds.train.pairs.size();
  r["test_pairs"] = ds.test.pairs.size();
  write_json(fs::path(cfg.out) / "synth_report.json", r);
  std::cout << r.dump(2) << "\n";
  return 0;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = dataset_of(cfg);
  MatchModel m = make_model(cfg.model, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.log = &std::cerr;
  const auto result = train(m, ds, tc);
  const fs::path ckpt = fs::path(cfg.out) / "model.json";
  save_model(m, ckpt);
  std::ofstream loss(fs::path(cfg.out) / "loss.csv");
  loss << "epoch,loss\n";
  loss.precision(12);
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) loss << e + 1 << "," << result.loss_history[e] << "\n";
  json r = report_header(cfg, "train");
  r["checkpoint"] = ckpt.string();
  r["epochs"] = tc.epochs;
  r["final_loss"] = result.loss_history.empty() ? 0.0 : result.loss_history.back();
  r["single_class"] = result.single_class;
  write_json(fs::path(cfg.out) / "train_report.json", r);
  std::cout << r.dump(2) << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, bool perfect_oracle) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = dataset_of(cfg);
  json r = report_header(cfg, "eval");
  std::ofstream csv(fs::path(cfg.out) / "metrics.csv");
  csv << kMetricsHeader << "\n";
  auto emit = [&](const std::string& name, const Metrics& m) {
    csv << metrics_row(name, m) << "\n";
    r["results"][name] = metrics_json(m);
  };
  if (perfect_oracle) {
    std::vector<double> scores;
    std::vector<bool> labels;
    for (const auto& p : ds.test.pairs) {
      scores.push_back(p.matched ? 1.0 : 0.0);
      labels.push_back(p.matched);
    }
    emit("perfect_oracle", evaluate_scores(scores, labels, cfg.model.gamma));
  } else {
    MatchModel m = model_for(cfg, checkpoint, ds);
    emit("test", evaluate(m, ds, ds.test.pairs, m.config.gamma));
    if (!cfg.cross_manifest.empty()) {
      const Dataset other = load_dataset(cfg.cross_manifest, {cfg.patch_size});
      std::vector<PairLabel> all = other.train.pairs;
      all.insert(all.end(), other.test.pairs.begin(), other.test.pairs.end());
      emit("cross", evaluate(m, other, all, m.config.gamma));
    }
  }
  write_json(fs::path(cfg.out) / "metrics.json", r);
  std::cout << r.dump(2) << "\n";
  return 0;
}

int cmd_match(const Common& c, const std::string& checkpoint, std::int64_t frame_a, std::int64_t frame_b) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = dataset_of(cfg);
  MatchModel m = model_for(cfg, checkpoint, ds);
  const Frame& fa = ds.frames.at(ds.frame_index(frame_a));
  const Frame& fb = ds.frames.at(ds.frame_index(frame_b));
  const auto ba = frame_bundles(fa, m);
  const auto bb = frame_bundles(fb, m);
  const auto scorer = make_scorer(m);
  std::ofstream csv(fs::path(cfg.out) / "match.csv");
  csv << "patch_a,patch_b,score,decision,forward,backward\n";
  csv.precision(12);
  for (std::size_t i = 0; i < ba.size(); ++i) {
    for (std::size_t j = 0; j < bb.size(); ++j) {
      const auto res = scorer(ba[i], bb[j]);
      csv << fa.patches[i].id << "," << fb.patches[j].id << "," << res.score << "," << res.decision << ","
          << res.forward << "," << res.backward << "\n";
    }
  }
  std::cout << "wrote " << (fs::path(cfg.out) / "match.csv").string() << "\n";
  return 0;
}

/// Feature-pair variants get their own trained models; discriminator swaps reuse the flagship embeddings.
int cmd_ablate(const Common& c, const std::string& checkpoint) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = dataset_of(cfg);
  RunConfig flagship_cfg = cfg;
  flagship_cfg.model.variant = {FeaturePair::phi_psi, DiscriminatorKind::bilinear};
  MatchModel flagship = model_for(flagship_cfg, checkpoint, ds);
  json r = report_header(cfg, "ablate");
  std::ofstream csv(fs::path(cfg.out) / "ablation.csv");
  csv << kMetricsHeader << "\n";
  const double gamma = flagship.config.gamma;
  for (auto pair : {FeaturePair::f_f, FeaturePair::rho_rho, FeaturePair::phi_phi, FeaturePair::psi_psi,
                    FeaturePair::phi_psi}) {
    for (auto disc : {DiscriminatorKind::bilinear, DiscriminatorKind::cosine, DiscriminatorKind::l2}) {
      const Variant v{pair, disc};
      Metrics m;
      if (disc == DiscriminatorKind::bilinear && pair != FeaturePair::phi_psi) {
        ModelConfig mc = flagship.config;
        mc.variant = v;
        MatchModel trained = make_model(mc, cfg.seed);
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        train(trained, ds, tc);
        m = evaluate(trained, ds, ds.test.pairs, gamma);
      } else {
        const auto s = score_pairs(ds, ds.test.pairs, flagship, ablation_variant(flagship, v));
        m = evaluate_scores(s.scores, s.labels, gamma);
      }
      csv << metrics_row(v.name(), m) << "\n";
      r["results"][v.name()] = metrics_json(m);
      std::cerr << v.name() << " auc " << m.auc << "\n";
    }
  }
  write_json(fs::path(cfg.out) / "ablation.json", r);
  std::cout << r.dump(2) << "\n";
  return 0;
}

int cmd_place(const Common& c, const std::string& checkpoint) {
  const RunConfig cfg = resolve(c);
  std::size_t revisit = 0;
  const Dataset route = build_route_dataset(cfg.route, cfg.seed, &revisit);
  MatchModel m = checkpoint.empty() ? model_for(cfg, "", build_pair_dataset(cfg.synth, cfg.seed)) : load_model(checkpoint);
  const auto scorer = make_scorer(m);
  std::vector<std::vector<EmbeddingBundle>> bundles;
  for (const auto& f : route.frames) bundles.push_back(frame_bundles(f, m));

  struct Row {
    std::size_t a, b;
    bool same;
  };
  std::vector<Row> val, test;
  for (std::size_t i = 0; i < revisit; ++i)
    for (std::size_t j = revisit; j < route.frames.size(); ++j)
      (i < revisit / 2 ? val : test).push_back({i, j, same_place(route.frames[i], route.frames[j])});

  auto scores_of = [&](const std::vector<Row>& rows, const SinkhornConfig& sk) {
    std::vector<double> s;
    for (const auto& row : rows) s.push_back(frame_pair_score(bundles[row.a], bundles[row.b], scorer, sk).score);
    return s;
  };
  auto labels_of = [](const std::vector<Row>& rows) {
    std::vector<bool> l;
    for (const auto& row : rows) l.push_back(row.same);
    return l;
  };
  SinkhornConfig sk = cfg.sinkhorn;
  if (cfg.tune_dustbin) {
    double best_f1 = -1.0;
    for (double z : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
      SinkhornConfig trial = sk;
      trial.dustbin = z;
      const auto s = scores_of(val, trial);
      const double f1 = evaluate_scores(s, labels_of(val), tune_threshold(s, labels_of(val))).f1;
      if (f1 > best_f1) {
        best_f1 = f1;
        sk.dustbin = z;
      }
    }
  }
  const auto vs = scores_of(val, sk);
  const auto ts = scores_of(test, sk);
  const auto res = place_recognition_eval(vs, labels_of(val), ts, labels_of(test));

  std::ofstream csv(fs::path(cfg.out) / "place.csv");
  csv << "frame_a,frame_b,distance,score,decision\n";
  csv.precision(10);
  for (std::size_t k = 0; k < test.size(); ++k) {
    const auto& fa = route.frames[test[k].a];
    const auto& fb = route.frames[test[k].b];
    csv << fa.id << "," << fb.id << "," << (fa.position - fb.position).norm() << "," << ts[k] << ","
        << (ts[k] > res.threshold ? 1 : 0) << "\n";
  }
  json r = report_header(cfg, "place");
  r["dustbin"] = sk.dustbin;
  r["frame_threshold"] = res.threshold;
  r["f1"] = res.f1;
  r["accuracy"] = res.accuracy;
  r["validation_pairs"] = val.size();
  r["test_pairs"] = test.size();
  r["test_metrics"] = metrics_json(res.metrics);
  write_json(fs::path(cfg.out) / "place.json", r);
  std::cout << r.dump(2) << "\n";
  return 0;
}

int cmd_stereo(const Common& c, const std::string& checkpoint) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = build_stereo_dataset(cfg.stereo, cfg.seed);
  MatchModel m = checkpoint.empty() ? model_for(cfg, "", build_pair_dataset(cfg.synth, cfg.seed)) : load_model(checkpoint);
  BundleCache cache(ds, m);
  const auto scorer = make_scorer(m);
  const auto rep = stereo_eval(ds, ds.test.pairs, cfg.stereo.baseline,
                               [&](const PairLabel& p) { return scorer(cache.of(p.a), cache.of(p.b)).score; },
                               cfg.stereo_threshold);
  std::size_t correct = 0;
  std::ofstream csv(fs::path(cfg.out) / "stereo.csv");
  csv << "patch_left,patch_right,score,disparity,valid,depth,true_depth\n";
  csv.precision(10);
  for (const auto& s : rep.samples) {
    csv << s.left_id << "," << s.right_id << "," << s.score << "," << s.disparity.pixels << "," << s.disparity.valid
        << "," << s.depth << "," << s.true_depth << "\n";
    const auto& l = ds.patch(s.left_id);
    const auto& rp = ds.patch(s.right_id);
    correct += l.landmark_id && rp.landmark_id && *l.landmark_id == *rp.landmark_id;
  }
  json r = report_header(cfg, "stereo");
  r["rmse_m"] = rep.rmse;
  r["accepted_pairs"] = rep.accepted;
  r["correct_accepted"] = correct;
  r["invalid_disparity"] = rep.invalid;
  r["threshold"] = cfg.stereo_threshold;
  write_json(fs::path(cfg.out) / "stereo.json", r);
  std::cout << r.dump(2) << "\n";
  return 0;
}

int cmd_verify_theory(const Common& c, int trials) {
  const RunConfig cfg = resolve(c);
  using namespace vgidm::theory;
  const Rng root(cfg.seed);
  json r = report_header(cfg, "verify-theory");
  r["trials"] = trials;

  Rng r1 = root.split("prop1");
  json p1 = json::array();
  bool ok1 = true;
  for (int t = 0; t < trials; ++t) {
    const auto m = random_model(r1, static_cast<std::size_t>(r1.integer(2, 10)));
    const auto rep = check_prop1(m);
    ok1 = ok1 && rep.pass;
    p1.push_back({{"kl", rep.kl}, {"bound", rep.bound}, {"margin", rep.margin}, {"jensen_slack", rep.jensen_slack},
                  {"kl_infinite", rep.kl_infinite}, {"pass", rep.pass}});
  }
  r["prop1"] = {{"pass", ok1}, {"models", p1}};

  Rng r2 = root.split("prop2");
  json p2 = json::array();
  bool ok2 = true;
  for (int t = 0; t < trials; ++t) {
    const std::size_t k = static_cast<std::size_t>(r2.integer(2, 10));
    const auto m = random_model(r2, k);
    const auto rep = perturbation_scaling(m, random_table(r2, k));
    const bool pass = rep.slope_generic >= 0.9 && rep.slope_generic <= 1.1 && rep.slope_optimal >= 1.8 &&
                      rep.slope_optimal <= 2.2;
    ok2 = ok2 && pass;
    p2.push_back({{"slope_generic", rep.slope_generic}, {"slope_optimal", rep.slope_optimal},
                  {"skipped", rep.skipped}, {"pass", pass}});
  }
  r["prop2"] = {{"pass", ok2}, {"eps_grid_relative", default_eps_grid()}, {"models", p2}};

  Rng r3 = root.split("prop3");
  json p3 = json::array();
  bool ok3 = true;
  for (int t = 0; t < trials; ++t) {
    const auto rep = check_prop3(random_corrupted_model(r3, static_cast<std::size_t>(r3.integer(2, 10))));
    ok3 = ok3 && rep.pass;
    p3.push_back({{"tv", rep.tv}, {"bound", rep.bound}, {"pass", rep.pass}});
  }
  const auto ideal = check_prop3(ideal_corrupted_model(r3, 6));
  r["prop3"] = {{"pass", ok3 && ideal.tv == 1.0},
                {"ideal", {{"tv", ideal.tv}, {"bound", ideal.bound}}},
                {"models", p3}};
  write_json(fs::path(cfg.out) / "theory.json", r);
  std::cout << "prop1 " << (ok1 ? "pass" : "FAIL") << ", prop2 " << (ok2 ? "pass" : "FAIL") << ", prop3 "
            << (r["prop3"]["pass"].get<bool>() ? "pass" : "FAIL") << "\n";
  return ok1 && ok2 && r["prop3"]["pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark patch matching with neighbourhood graphs"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "run seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--set", common.overrides, "extra key=value assignments");
  };
  std::string checkpoint, kind = "pairs";
  std::int64_t frame_a = 0, frame_b = 1;
  bool perfect = false;
  int trials = 100;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--kind", kind, "pairs, route or stereo");
  auto* trn = app.add_subcommand("train", "train a model, write checkpoint and loss history");
  add_common(trn);
  auto* ev = app.add_subcommand("eval", "precision, recall, F1, AUC on the test pairs");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint);
  ev->add_flag("--perfect-oracle", perfect, "score pairs by their labels (debug)");
  auto* match = app.add_subcommand("match", "score every patch pair of two frames");
  add_common(match);
  match->add_option("--checkpoint", checkpoint);
  match->add_option("--frame-a", frame_a);
  match->add_option("--frame-b", frame_b);
  auto* abl = app.add_subcommand("ablate", "one metrics row per feature pair and discriminator");
  add_common(abl);
  abl->add_option("--checkpoint", checkpoint);
  auto* place = app.add_subcommand("place", "frame-level place recognition on a two-pass route");
  add_common(place);
  place->add_option("--checkpoint", checkpoint);
  auto* stereo = app.add_subcommand("stereo", "landmark depth from stereo matches");
  add_common(stereo);
  stereo->add_option("--checkpoint", checkpoint);
  auto* theory = app.add_subcommand("verify-theory", "check the likelihood and divergence bounds on random discrete models");
  add_common(theory);
  theory->add_option("--trials", trials)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(common, kind);
    if (*trn) return cmd_train(common);
    if (*ev) return cmd_eval(common, checkpoint, perfect);
    if (*match) return cmd_match(common, checkpoint, frame_a, frame_b);
    if (*abl) return cmd_ablate(common, checkpoint);
    if (*place) return cmd_place(common, checkpoint);
    if (*stereo) return cmd_stereo(common, checkpoint);
    if (*theory) return cmd_verify_theory(common, trials);
  } catch (const ConfigError& e) {
    json err = {{"error", "config"}, {"problems", e.problems()}};
    std::cerr << err.dump(2) << "\n";
    return 2;
  } catch (const DatasetError& e) {
    std::cerr << json{{"error", "dataset"}, {"message", e.what()}}.dump(2) << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump(2) << "\n";
    return 1;
  }
  return 0;
}
