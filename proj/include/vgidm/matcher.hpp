#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vgidm/autodiff.hpp"
#include "vgidm/featurize.hpp"
#include "vgidm/gnn.hpp"
#include "vgidm/graph.hpp"
#include "vgidm/rng.hpp"
#include "vgidm/scene.hpp"

namespace vgidm {

/// Which embeddings of x and y the discriminator compares.
enum class FeaturePair { f_f, rho_rho, phi_phi, psi_psi, phi_psi };
enum class DiscriminatorKind { bilinear, cosine, l2 };

inline const char* to_string(FeaturePair p) {
  switch (p) {
    case FeaturePair::f_f: return "f_f";
    case FeaturePair::rho_rho: return "rho_rho";
    case FeaturePair::phi_phi: return "phi_phi";
    case FeaturePair::psi_psi: return "psi_psi";
    case FeaturePair::phi_psi: return "phi_psi";
  }
  return "?";
}

inline const char* to_string(DiscriminatorKind d) {
  switch (d) {
    case DiscriminatorKind::bilinear: return "bilinear";
    case DiscriminatorKind::cosine: return "cosine";
    case DiscriminatorKind::l2: return "l2";
  }
  return "?";
}

class UnknownVariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline FeaturePair feature_pair_from_string(const std::string& s) {
  for (auto p : {FeaturePair::f_f, FeaturePair::rho_rho, FeaturePair::phi_phi, FeaturePair::psi_psi,
                 FeaturePair::phi_psi})
    if (s == to_string(p)) return p;
  throw UnknownVariantError("unknown feature pair '" + s + "'");
}

inline DiscriminatorKind discriminator_from_string(const std::string& s) {
  for (auto d : {DiscriminatorKind::bilinear, DiscriminatorKind::cosine, DiscriminatorKind::l2})
    if (s == to_string(d)) return d;
  throw UnknownVariantError("unknown discriminator '" + s + "'");
}

struct Variant {
  FeaturePair pair = FeaturePair::phi_psi;
  DiscriminatorKind disc = DiscriminatorKind::bilinear;

  std::string name() const { return std::string("d(") + to_string(pair) + ")/" + to_string(disc); }
};

struct ModelConfig {
  std::size_t n = 32;
  std::size_t k = 5;
  FeaturizerKind featurizer = FeaturizerKind::fixed_hist;
  std::size_t conv_width = 8;
  GnnArch arch = GnnArch::gat;
  std::size_t heads = 4;
  Pooling pooling = Pooling::mean;
  Variant variant;
  double gamma = 0.5;         ///< decision threshold, strict
  double clamp_eps = 1e-7;    ///< scores are clamped to [eps, 1 - eps] before the log

  FeaturizerConfig featurizer_config() const { return {featurizer, n, 1, conv_width}; }
  GnnConfig gnn_config() const { return {arch, n, heads, 0.2, pooling}; }
};

/// Featurizer, GNN and discriminator parameters plus configuration.
struct MatchModel {
  ModelConfig config;
  ParamSet params;

  bool uses_graph() const { return config.variant.pair != FeaturePair::f_f; }
};

inline std::size_t feature_width(FeaturePair p, std::size_t n) {
  switch (p) {
    case FeaturePair::f_f:
    case FeaturePair::rho_rho: return n;
    case FeaturePair::phi_phi: return 2 * n;
    case FeaturePair::psi_psi: return 3 * n;
    case FeaturePair::phi_psi: return 0;
  }
  return 0;
}

inline std::string variant_matrix_name(FeaturePair p) { return std::string("disc.") + to_string(p) + ".M"; }

/// Learnable discriminator parameters; the flagship pair uses the four M blocks.
inline void init_discriminator(ParamSet& params, FeaturePair pair, std::size_t n, Rng rng) {
  if (pair == FeaturePair::phi_psi) {
    const double s = 1.0 / static_cast<double>(n);
    for (const char* b : {"disc.M12", "disc.M21", "disc.M22", "disc.M23"}) params.add(b, uniform_tensor({n, n}, s, rng));
    return;
  }
  const std::size_t w = feature_width(pair, n);
  params.add(variant_matrix_name(pair), uniform_tensor({w, w}, 1.0 / static_cast<double>(w), rng));
}

inline MatchModel make_model(const ModelConfig& cfg, std::uint64_t seed) {
  MatchModel m;
  m.config = cfg;
  const Rng rng(seed);
  init_featurizer(m.params, cfg.featurizer_config(), rng.split("featurizer"));
  if (m.uses_graph()) init_gnn(m.params, cfg.gnn_config(), rng.split("gnn"));
  if (cfg.variant.disc == DiscriminatorKind::bilinear) init_discriminator(m.params, cfg.variant.pair, cfg.n, rng.split("disc"));
  return m;
}

/// f(x), rho(x), g(G^x) for one patch on a tape. rho and g are empty when the model does not use the graph.
struct PatchEmbedding {
  Var f;
  std::optional<Var> rho;
  std::optional<Var> g;

  Var phi() const { return ops::concat({*rho, f}); }
  Var psi() const { return ops::concat({*g, *rho, f}); }
};

/**
 * Embeds every patch of a frame: the featurizer runs once per patch, then the
 * GNN runs over each patch's neighbourhood clique.
 */
inline std::vector<PatchEmbedding> embed_frame(Tape& tape, const Frame& frame, MatchModel& model) {
  const auto fcfg = model.config.featurizer_config();
  std::vector<Var> feats;
  feats.reserve(frame.patches.size());
  std::unordered_map<std::int64_t, std::size_t> pos;
  for (std::size_t i = 0; i < frame.patches.size(); ++i) {
    feats.push_back(featurize(tape, frame.patches[i].pixels, model.params, fcfg));
    pos[frame.patches[i].id] = i;
  }
  std::vector<PatchEmbedding> out;
  out.reserve(feats.size());
  if (!model.uses_graph()) {
    for (auto f : feats) out.push_back({f, std::nullopt, std::nullopt});
    return out;
  }
  const auto gcfg = model.config.gnn_config();
  const auto graphs = frame_graphs(frame, model.config.k);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    std::vector<Var> rows;
    for (auto id : graphs[i].vertices) rows.push_back(feats[pos.at(id)]);
    const auto emb = embed_graph(graphs[i], ops::stack_rows(rows), model.params, gcfg);
    out.push_back({feats[i], emb.center, emb.graph});
  }
  return out;
}

/// Tape-free copy of one patch's embeddings: f, rho, g, phi = rho||f, psi = g||rho||f.
struct EmbeddingBundle {
  Tensor f;
  Tensor rho;
  Tensor g;

  bool has_graph() const { return !rho.empty(); }
  Tensor phi() const { return cat({&rho, &f}); }
  Tensor psi() const { return cat({&g, &rho, &f}); }

 private:
  static Tensor cat(std::initializer_list<const Tensor*> parts) {
    std::vector<double> v;
    for (const auto* p : parts) v.insert(v.end(), p->data().begin(), p->data().end());
    return Tensor::vector(std::move(v));
  }
};

inline std::vector<EmbeddingBundle> frame_bundles(const Frame& frame, MatchModel& model) {
  Tape tape;
  std::vector<EmbeddingBundle> out;
  for (const auto& e : embed_frame(tape, frame, model)) {
    EmbeddingBundle b;
    b.f = e.f.value();
    if (e.rho) b.rho = e.rho->value();
    if (e.g) b.g = e.g->value();
    out.push_back(std::move(b));
  }
  return out;
}

/// One patch on a tape rebuilt from a bundle, as constants.
inline PatchEmbedding constant_embedding(Tape& tape, const EmbeddingBundle& b) {
  PatchEmbedding e{tape.constant(b.f), std::nullopt, std::nullopt};
  if (b.has_graph()) {
    e.rho = tape.constant(b.rho);
    e.g = tape.constant(b.g);
  }
  return e;
}

/**
 * Block bilinear discriminator:
 *   sigma(rho_x^T M12 rho_y + f_x^T M21 g_y + f_x^T M22 rho_y + f_x^T M23 f_y).
 */
inline Var discriminate_blocks(Tape& tape, const PatchEmbedding& x, const PatchEmbedding& y, ParamSet& params) {
  Var logit = ops::add_n({ops::bilinear(*x.rho, tape.param(params.at("disc.M12")), *y.rho),
                          ops::bilinear(x.f, tape.param(params.at("disc.M21")), *y.g),
                          ops::bilinear(x.f, tape.param(params.at("disc.M22")), *y.rho),
                          ops::bilinear(x.f, tape.param(params.at("disc.M23")), y.f)});
  return ops::sigmoid(logit);
}

/// The assembled M = [[0, M12, 0], [M21, M22, M23]] in R^{2n x 3n}.
inline Tensor assemble_block_matrix(const ParamSet& params) {
  const Tensor& m12 = params.at("disc.M12").value;
  const std::size_t n = m12.rows();
  Tensor M({2 * n, 3 * n});
  auto put = [&](const Tensor& b, std::size_t r0, std::size_t c0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) M.at(r0 + i, c0 + j) = b.at(i, j);
  };
  put(m12, 0, n);
  put(params.at("disc.M21").value, n, 0);
  put(params.at("disc.M22").value, n, n);
  put(params.at("disc.M23").value, n, 2 * n);
  return M;
}

namespace detail {

inline Var select(const PatchEmbedding& e, FeaturePair p, bool second) {
  switch (p) {
    case FeaturePair::f_f: return e.f;
    case FeaturePair::rho_rho: return *e.rho;
    case FeaturePair::phi_phi: return e.phi();
    case FeaturePair::psi_psi: return e.psi();
    case FeaturePair::phi_psi: return second ? e.psi() : e.phi();
  }
  return e.f;
}

inline Var similarity(Var a, Var b, DiscriminatorKind kind) {
  if (kind == DiscriminatorKind::cosine) {
    Tape& t = *a.tape;
    return ops::scale(ops::add(t.constant(Tensor::scalar(1.0)), ops::cosine(a, b)), 0.5);
  }
  return ops::exp(ops::scale(ops::l2_norm(ops::sub(a, b)), -1.0));
}

}  // namespace detail

/**
 * Direction score d(x -> y) in (0, 1] for a variant. Cosine and L2 variants on
 * the flagship pair average the four block comparisons (rho_x,rho_y),
 * (f_x,g_y), (f_x,rho_y), (f_x,f_y).
 */
inline Var direction_score(Tape& tape, const PatchEmbedding& x, const PatchEmbedding& y, ParamSet& params,
                           const Variant& v) {
  if (v.disc == DiscriminatorKind::bilinear) {
    if (v.pair == FeaturePair::phi_psi) return discriminate_blocks(tape, x, y, params);
    const auto& name = variant_matrix_name(v.pair);
    if (!params.contains(name)) throw UnknownVariantError("model has no parameters for " + v.name());
    return ops::sigmoid(ops::bilinear(detail::select(x, v.pair, false), tape.param(params.at(name)),
                                      detail::select(y, v.pair, true)));
  }
  if (v.pair == FeaturePair::phi_psi) {
    return ops::scale(ops::add_n({detail::similarity(*x.rho, *y.rho, v.disc), detail::similarity(x.f, *y.g, v.disc),
                                  detail::similarity(x.f, *y.rho, v.disc), detail::similarity(x.f, y.f, v.disc)}),
                      0.25);
  }
  return detail::similarity(detail::select(x, v.pair, false), detail::select(y, v.pair, true), v.disc);
}

struct MatchResult {
  double score = 0.0;     ///< S_match, mean of the two direction scores
  int decision = 0;       ///< 1 iff score > gamma
  double forward = 0.0;   ///< d(phi(x), psi(G^y))
  double backward = 0.0;  ///< d(phi(y), psi(G^x))
};

inline MatchResult make_result(double dxy, double dyx, double gamma) {
  MatchResult r;
  r.forward = dxy;
  r.backward = dyx;
  r.score = 0.5 * (dxy + dyx);
  r.decision = r.score > gamma ? 1 : 0;
  return r;
}

/// Pair scorer over precomputed bundles.
using PairScorer = std::function<MatchResult(const EmbeddingBundle&, const EmbeddingBundle&)>;

/**
 * Scorer for a feature-pair / discriminator variant using the model's current
 * parameters. Bilinear variants need their matrices in the model.
 */
inline PairScorer ablation_variant(MatchModel& model, const Variant& v) {
  if (v.disc == DiscriminatorKind::bilinear) {
    const bool ok = v.pair == FeaturePair::phi_psi ? model.params.contains("disc.M12")
                                                   : model.params.contains(variant_matrix_name(v.pair));
    if (!ok) throw UnknownVariantError("model has no parameters for " + v.name());
  }
  const double gamma = model.config.gamma;
  return [&model, v, gamma](const EmbeddingBundle& x, const EmbeddingBundle& y) {
    if (v.pair != FeaturePair::f_f && (!x.has_graph() || !y.has_graph())) {
      throw UnknownVariantError(v.name() + " needs graph embeddings");
    }
    Tape tape;
    const auto ex = constant_embedding(tape, x);
    const auto ey = constant_embedding(tape, y);
    const double dxy = direction_score(tape, ex, ey, model.params, v).value().item();
    const double dyx = direction_score(tape, ey, ex, model.params, v).value().item();
    return make_result(dxy, dyx, gamma);
  };
}

inline PairScorer make_scorer(MatchModel& model) { return ablation_variant(model, model.config.variant); }

/// S_match for patches x, y given their frames.
inline MatchResult match_score(const Frame& fx, std::size_t ix, const Frame& fy, std::size_t iy, MatchModel& model) {
  const auto bx = frame_bundles(fx, model);
  const auto by = frame_bundles(fy, model);
  return make_scorer(model)(bx.at(ix), by.at(iy));
}

/**
 * Per-pair log-likelihood term of the training objective:
 *   matched:   (log d_xy + log d_yx) / 2
 *   unmatched: (log(1 - d_xy) + log(1 - d_yx)) / 2
 * with both scores clamped to [eps, 1 - eps].
 */
inline Var pair_log_likelihood(Var dxy, Var dyx, bool matched, double eps) {
  auto term = [&](Var d) {
    Var c = ops::clamp(d, eps, 1.0 - eps);
    return matched ? ops::log(c) : ops::log(ops::rsub_scalar(1.0, c));
  };
  return ops::scale(ops::add(term(dxy), term(dyx)), 0.5);
}

struct LabeledEmbeddingPair {
  const PatchEmbedding* x;
  const PatchEmbedding* y;
  bool matched;
};

class EmptyBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// -L_empID over a batch of embedded pairs.
inline Var loss_emp_id(Tape& tape, const std::vector<LabeledEmbeddingPair>& batch, MatchModel& model) {
  if (batch.empty()) throw EmptyBatchError("loss_emp_id: empty batch");
  std::vector<Var> terms;
  terms.reserve(batch.size());
  const auto& v = model.config.variant;
  for (const auto& p : batch) {
    Var dxy = direction_score(tape, *p.x, *p.y, model.params, v);
    Var dyx = direction_score(tape, *p.y, *p.x, model.params, v);
    terms.push_back(pair_log_likelihood(dxy, dyx, p.matched, model.config.clamp_eps));
  }
  return ops::scale(ops::add_n(terms), -1.0 / static_cast<double>(terms.size()));
}

}  // namespace vgidm
