#include "relink/ed_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "relink/error.hpp"
#include "relink/kernels.hpp"

namespace relink {
namespace {

constexpr char kModelMagic[8] = {'R', 'E', 'L', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kModelVersion = 1;

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, std::string("non-finite value in ") + what);
  }
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::CorruptModel, "model file truncated");
  return value;
}

// Mean of the given rows, zero vector when empty.
std::vector<double> mean_of(const std::vector<std::span<const float>>& rows, std::size_t dim) {
  std::vector<double> mean(dim, 0.0);
  if (rows.empty()) return mean;
  kernels::serial::accumulate_rows(rows, mean);
  for (double& x : mean) x /= static_cast<double>(rows.size());
  return mean;
}

}  // namespace

void EDHyperParams::validate() const {
  if (relations < 1 || dim < 1 || lbp_iterations < 1 || !(lbp_damping >= 0.0 && lbp_damping < 1.0) || attention_keep < 1 ||
      scorer_hidden < 1 || !std::isfinite(margin)) {
    throw Error(ErrorCode::InvalidArgument, "ED hyperparameters require K, d, T, R, H >= 1 and 0 <= damping < 1");
  }
}

double Calibration::apply(double score) const {
  double p = sigmoid(slope * score + intercept);
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

EDParams EDParams::zeros(const EDHyperParams& hyper) {
  EDParams p;
  p.dim = hyper.dim;
  p.relations = hyper.relations;
  p.hidden = hyper.scorer_hidden;
  const std::size_t d = hyper.dim;
  p.attention_diag.assign(d, 0.0);
  p.local_diag.assign(d, 0.0);
  p.relation_diag.assign(hyper.relations * d, 0.0);
  p.pair_diag.assign(hyper.relations * d, 0.0);
  p.encoder_weight.assign(d * 2 * d, 0.0);
  p.encoder_bias.assign(d, 0.0);
  p.hidden_weight.assign(hyper.scorer_hidden * 2, 0.0);
  p.hidden_bias.assign(hyper.scorer_hidden, 0.0);
  p.output_weight.assign(hyper.scorer_hidden, 0.0);
  p.output_bias.assign(1, 0.0);
  return p;
}

EDParams EDParams::initialize(const EDHyperParams& hyper, std::uint64_t seed) {
  hyper.validate();
  EDParams p = zeros(hyper);
  std::fill(p.attention_diag.begin(), p.attention_diag.end(), 1.0);
  std::fill(p.local_diag.begin(), p.local_diag.end(), 1.0);
  std::fill(p.relation_diag.begin(), p.relation_diag.end(), 1.0);
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](std::vector<double>& v, std::size_t fan_in) {
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(static_cast<double>(fan_in)), 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (double& x : v) x = u(rng);
  };
  fill_uniform(p.encoder_weight, 2 * hyper.dim);
  fill_uniform(p.encoder_bias, 2 * hyper.dim);
  fill_uniform(p.hidden_weight, 2);
  fill_uniform(p.hidden_bias, 2);
  fill_uniform(p.output_weight, hyper.scorer_hidden);
  fill_uniform(p.output_bias, hyper.scorer_hidden);
  return p;
}

bool EDParams::all_finite() const {
  bool ok = std::isfinite(calibration.slope) && std::isfinite(calibration.intercept);
  for_each_tensor([&](std::string_view, std::span<const double> v) {
    ok = ok && std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  });
  return ok;
}

void save_model(std::ostream& out, const EDModel& model) {
  const EDHyperParams& h = model.hyper;
  out.write(kModelMagic, sizeof(kModelMagic));
  write_pod<std::uint32_t>(out, kModelVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h.dim));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h.relations));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h.scorer_hidden));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h.lbp_iterations));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h.attention_keep));
  write_pod<double>(out, h.margin);
  write_pod<double>(out, h.lbp_damping);
  model.params.for_each_tensor([&](std::string_view, std::span<const double> v) {
    for (double x : v) write_pod<float>(out, static_cast<float>(x));
  });
  write_pod<float>(out, static_cast<float>(model.params.calibration.slope));
  write_pod<float>(out, static_cast<float>(model.params.calibration.intercept));
  if (!out) throw Error(ErrorCode::Io, "failed to write model");
}

void save_model(const std::filesystem::path& path, const EDModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot create model file " + path.string());
  save_model(out, model);
}

EDModel load_model(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) throw Error(ErrorCode::CorruptModel, "not a model file (bad magic)");
  if (read_pod<std::uint32_t>(in) != kModelVersion) throw Error(ErrorCode::CorruptModel, "unsupported model version");
  EDModel model;
  EDHyperParams& h = model.hyper;
  h.dim = read_pod<std::uint32_t>(in);
  h.relations = read_pod<std::uint32_t>(in);
  h.scorer_hidden = read_pod<std::uint32_t>(in);
  h.lbp_iterations = read_pod<std::uint32_t>(in);
  h.attention_keep = read_pod<std::uint32_t>(in);
  h.margin = read_pod<double>(in);
  h.lbp_damping = read_pod<double>(in);
  try {
    h.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptModel, std::string("model hyperparameters invalid: ") + e.what());
  }
  if (h.dim > (1u << 16)) throw Error(ErrorCode::CorruptModel, "model dim implausibly large");
  model.params = EDParams::zeros(h);
  model.params.for_each_tensor([&](std::string_view, std::span<double> v) {
    for (double& x : v) x = read_pod<float>(in);
  });
  model.params.calibration.slope = read_pod<float>(in);
  model.params.calibration.intercept = read_pod<float>(in);
  if (!model.params.all_finite()) throw Error(ErrorCode::CorruptModel, "model contains non-finite values");
  return model;
}

EDModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open model " + path.string());
  return load_model(in);
}

PreparedDocument prepare_document(const Document& doc, std::span<const Span> spans, const KnowledgeStore& store,
                                  const SelectionParams& selection) {
  PreparedDocument out;
  out.dim = store.dim();
  const std::size_t d = store.dim();
  for (const Span& span : spans) {
    CandidateSet set = select_candidates(doc, span, store, selection);
    if (set.candidates.empty()) {
      out.unlinkable.push_back(span);
      continue;
    }
    MentionInput m;
    m.span = span;
    m.candidates = set.candidates;
    m.candidate_vectors.reserve(set.candidates.size() * d);
    for (const Candidate& c : set.candidates) {
      auto v = *store.entity_vector(c.entity);
      m.candidate_vectors.insert(m.candidate_vectors.end(), v.begin(), v.end());
      m.log_priors.push_back(std::log(c.prior));
    }
    std::vector<std::span<const float>> ctx;
    for (std::size_t t : set.context_tokens) {
      if (auto v = lookup_word(store, doc.tokens()[t].text)) ctx.push_back(*v);
    }
    for (const auto& v : ctx) m.context_vectors.insert(m.context_vectors.end(), v.begin(), v.end());
    m.context_mean = mean_of(ctx, d);
    std::vector<std::span<const float>> ment;
    for (std::size_t t : set.mention_tokens) {
      if (auto v = lookup_word(store, doc.tokens()[t].text)) ment.push_back(*v);
    }
    m.mention_mean = mean_of(ment, d);
    out.mentions.push_back(std::move(m));
  }
  return out;
}

std::vector<double> mention_encode(std::span<const double> mention_mean, std::span<const double> context_mean, const EDParams& params) {
  const std::size_t d = params.dim;
  std::vector<double> f(d);
  for (std::size_t r = 0; r < d; ++r) {
    const double* w = params.encoder_weight.data() + r * 2 * d;
    double z = params.encoder_bias[r];
    for (std::size_t q = 0; q < d; ++q) z += w[q] * mention_mean[q];
    for (std::size_t q = 0; q < d; ++q) z += w[d + q] * context_mean[q];
    f[r] = std::tanh(z);
  }
  return f;
}

std::vector<double> mention_encode(const Document& doc, const CandidateSet& set, const KnowledgeStore& store, const EDParams& params) {
  auto gather = [&](const std::vector<std::size_t>& tokens) {
    std::vector<std::span<const float>> rows;
    for (std::size_t t : tokens) {
      if (auto v = lookup_word(store, doc.tokens()[t].text)) rows.push_back(*v);
    }
    return mean_of(rows, store.dim());
  };
  return mention_encode(gather(set.mention_tokens), gather(set.context_tokens), params);
}

LocalScores local_psi(const MentionInput& mention, const EDParams& params, std::size_t attention_keep) {
  const std::size_t d = params.dim;
  const std::size_t m = mention.size();
  const std::size_t words = mention.context_size(d);
  LocalScores out;
  out.psi.assign(m, 0.0);
  out.mix.assign(d, 0.0);
  if (words == 0 || m == 0) return out;

  std::vector<double> logits(m * words);
  kernels::serial::bilinear_diag(mention.candidate_vectors, m, mention.context_vectors, words, params.attention_diag, 1.0, logits);
  std::vector<double> u(words);
  std::vector<std::size_t> best(words, 0);
  for (std::size_t w = 0; w < words; ++w) {
    u[w] = logits[w];
    for (std::size_t a = 1; a < m; ++a) {
      if (logits[a * words + w] > u[w]) {
        u[w] = logits[a * words + w];
        best[w] = a;
      }
    }
  }

  std::vector<std::size_t> order(words);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });
  order.resize(std::min(order.size(), attention_keep));

  double top = u[order.front()];
  double z = 0.0;
  out.beta.resize(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.beta[r] = std::exp(u[order[r]] - top);
    z += out.beta[r];
  }
  for (double& b : out.beta) b /= z;
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto w = mention.context(order[r], d);
    for (std::size_t c = 0; c < d; ++c) out.mix[c] += out.beta[r] * w[c];
    out.best.push_back(best[order[r]]);
  }
  out.kept = std::move(order);

  for (std::size_t a = 0; a < m; ++a) {
    auto e = mention.candidate(a, d);
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += e[c] * params.local_diag[c] * out.mix[c];
    out.psi[a] = s;
  }
  return out;
}

PairwiseAlpha pairwise_alpha(std::span<const std::vector<double>> f_vecs, const EDParams& params) {
  const std::size_t n = f_vecs.size();
  const std::size_t K = params.relations;
  const std::size_t d = params.dim;
  PairwiseAlpha alpha(n, K);
  if (n < 2) return alpha;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<double> flat(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy(f_vecs[i].begin(), f_vecs[i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * d));
  std::vector<double> logits(n * n);
  for (std::size_t k = 0; k < K; ++k) {
    std::span<const double> diag(params.pair_diag.data() + k * d, d);
    kernels::serial::bilinear_diag(flat, n, flat, n, diag, scale, logits);
    for (std::size_t i = 0; i < n; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) top = std::max(top, logits[i * n + j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        alpha(i, j, k) = std::exp(logits[i * n + j] - top);
        z += alpha(i, j, k);
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) alpha(i, j, k) /= z;
      }
    }
  }
  return alpha;
}

double pairwise_phi(std::span<const double> e_i, std::span<const double> e_j, std::span<const double> alpha_ij, const EDParams& params) {
  const std::size_t d = params.dim;
  double phi = 0.0;
  for (std::size_t k = 0; k < params.relations; ++k) {
    const double* r = params.relation_diag.data() + k * d;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += e_i[c] * r[c] * e_j[c];
    phi += alpha_ij[k] * s;
  }
  return phi;
}

PairTables::PairTables(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  const std::size_t n = sizes_.size();
  tables_.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) tables_[i * n + j].assign(sizes_[i] * sizes_[j], 0.0);
    }
  }
}

LbpResult lbp_infer(std::span<const std::vector<double>> psi, const PairTables& pair, const EDHyperParams& hyper, bool keep_trace) {
  const std::size_t n = psi.size();
  LbpResult result;
  for (const auto& p : psi) require_finite(p, "local score table");
  if (n <= 1) {
    result.max_marginals.assign(psi.begin(), psi.end());
    return result;
  }
  if (pair.mentions() != n) throw Error(ErrorCode::InvalidArgument, "pair tables do not match the mention count");
  for (std::size_t i = 0; i < n; ++i) {
    if (pair.size(i) != psi[i].size()) throw Error(ErrorCode::InvalidArgument, "pair table size mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) require_finite(pair.table(i, j), "pairwise score table");
    }
  }

  std::vector<std::size_t> offsets(n * n, 0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      offsets[i * n + j] = total;
      total += psi[j].size();
    }
  }
  auto msg_off = [&](std::size_t from, std::size_t to) { return offsets[from * n + to]; };

  const double damping = hyper.lbp_damping;
  std::vector<double> old(total, 0.0);
  std::vector<double> cur(total, 0.0);
  if (keep_trace) {
    result.trace.offsets = offsets;
    result.trace.messages.push_back(old);
  }

  std::vector<double> h;
  std::vector<double> raw;
  for (std::size_t t = 1; t <= hyper.lbp_iterations; ++t) {
    std::vector<std::uint32_t> arg(keep_trace ? total : 0);
    std::vector<std::uint32_t> top(keep_trace ? n * n : 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t mi = psi[i].size();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::size_t mj = psi[j].size();
        h.assign(psi[i].begin(), psi[i].end());
        for (std::size_t l = 0; l < n; ++l) {
          if (l == i || l == j) continue;
          const double* in = old.data() + msg_off(l, i);
          for (std::size_t a = 0; a < mi; ++a) h[a] += in[a];
        }
        auto table = pair.table(i, j);
        raw.assign(mj, -std::numeric_limits<double>::infinity());
        const std::size_t off = msg_off(i, j);
        for (std::size_t b = 0; b < mj; ++b) {
          std::uint32_t best = 0;
          for (std::size_t a = 0; a < mi; ++a) {
            double v = h[a] + table[a * mj + b];
            if (v > raw[b]) {
              raw[b] = v;
              best = static_cast<std::uint32_t>(a);
            }
          }
          if (keep_trace) arg[off + b] = best;
        }
        std::size_t bmax = argmax(raw);
        if (keep_trace) top[i * n + j] = static_cast<std::uint32_t>(bmax);
        const double peak = raw[bmax];
        for (std::size_t b = 0; b < mj; ++b) {
          double computed = raw[b] - peak;
          cur[off + b] = t == 1 ? computed : damping * old[off + b] + (1.0 - damping) * computed;
        }
      }
    }
    std::swap(old, cur);
    if (keep_trace) {
      result.trace.messages.push_back(old);
      result.trace.arg.push_back(std::move(arg));
      result.trace.top.push_back(std::move(top));
    }
  }

  result.max_marginals.assign(psi.begin(), psi.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* in = old.data() + msg_off(j, i);
      for (std::size_t a = 0; a < psi[i].size(); ++a) result.max_marginals[i][a] += in[a];
    }
  }
  return result;
}

double joint_objective(std::span<const std::vector<double>> psi, const PairTables& pair, std::span<const std::size_t> assignment) {
  double total = 0.0;
  const std::size_t n = psi.size();
  for (std::size_t i = 0; i < n; ++i) total += psi[i][assignment[i]];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += pair(i, j, assignment[i], assignment[j]);
  }
  return total;
}

double final_score(double max_marginal, double prior, const EDParams& params) {
  const double log_prior = std::log(prior);
  double g = params.output_bias[0];
  for (std::size_t h = 0; h < params.hidden; ++h) {
    double pre = params.hidden_weight[2 * h] * max_marginal + params.hidden_weight[2 * h + 1] * log_prior + params.hidden_bias[h];
    g += params.output_weight[h] * relu(pre);
  }
  return g;
}

Calibration fit_calibration(std::span<const double> scores, std::span<const bool> labels) {
  const std::size_t n = scores.size();
  if (n < 2 || labels.size() != n) throw Error(ErrorCode::DegenerateCalibration, "calibration needs at least two labeled scores");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0 || positives == n) throw Error(ErrorCode::DegenerateCalibration, "calibration data contains a single class");

  double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  double sd = std::sqrt(var / static_cast<double>(n));
  if (!(sd > 0.0)) sd = 1.0;

  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (scores[i] - mean) / sd;
  // Newton's method on the log-likelihood, with a small ridge so separable
  // data still yields finite parameters.
  double a = 0.0;
  double b = 0.0;
  constexpr int kMaxIterations = 100;
  constexpr double kRidge = 1e-6;
  for (int it = 0; it < kMaxIterations; ++it) {
    double ga = -kRidge * a;
    double gb = 0.0;
    double haa = kRidge;
    double hab = 0.0;
    double hbb = 1e-12;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(a * z[i] + b);
      const double r = (labels[i] ? 1.0 : 0.0) - p;
      const double w = p * (1.0 - p);
      ga += r * z[i];
      gb += r;
      haa += w * z[i] * z[i];
      hab += w * z[i];
      hbb += w;
    }
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0)) break;
    const double da = (hbb * ga - hab * gb) / det;
    const double db = (haa * gb - hab * ga) / det;
    a += da;
    b += db;
    if (std::abs(da) + std::abs(db) < 1e-10) break;
  }
  if (!std::isfinite(a) || !std::isfinite(b)) throw Error(ErrorCode::DegenerateCalibration, "calibration did not converge");
  return Calibration{a / sd, b - a * mean / sd};
}

DocumentForward forward_document(const PreparedDocument& doc, const EDModel& model, bool keep_trace) {
  const EDParams& params = model.params;
  const EDHyperParams& hyper = model.hyper;
  const std::size_t n = doc.mentions.size();
  const std::size_t d = params.dim;
  if (n && doc.dim != d) {
    throw Error(ErrorCode::DimensionMismatch, "store dim " + std::to_string(doc.dim) + " does not match model dim " + std::to_string(d));
  }
  DocumentForward fwd;
  fwd.local.reserve(n);
  std::vector<std::vector<double>> psi;
  psi.reserve(n);
  for (const MentionInput& m : doc.mentions) {
    fwd.local.push_back(local_psi(m, params, hyper.attention_keep));
    psi.push_back(fwd.local.back().psi);
  }

  std::vector<std::size_t> sizes(n);
  for (std::size_t i = 0; i < n; ++i) sizes[i] = doc.mentions[i].size();
  fwd.candidate_offset.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) fwd.candidate_offset[i + 1] = fwd.candidate_offset[i] + sizes[i];

  if (n >= 2) {
    for (const MentionInput& m : doc.mentions) fwd.f.push_back(mention_encode(m.mention_mean, m.context_mean, params));
    fwd.alpha = pairwise_alpha(fwd.f, params);

    // Relation-weighted Gram matrices over every candidate in the document.
    const std::size_t total = fwd.candidate_offset[n];
    std::vector<double> all;
    all.reserve(total * d);
    for (const MentionInput& m : doc.mentions) all.insert(all.end(), m.candidate_vectors.begin(), m.candidate_vectors.end());
    fwd.gram.assign(params.relations, std::vector<double>(total * total));
    for (std::size_t k = 0; k < params.relations; ++k) {
      std::span<const double> diag(params.relation_diag.data() + k * d, d);
      kernels::parallel::bilinear_diag(all, total, all, total, diag, 1.0, fwd.gram[k]);
    }

    fwd.pair = PairTables(sizes);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        for (std::size_t a = 0; a < sizes[i]; ++a) {
          const std::size_t ga = fwd.candidate_offset[i] + a;
          for (std::size_t b = 0; b < sizes[j]; ++b) {
            const std::size_t gb = fwd.candidate_offset[j] + b;
            double v = 0.0;
            for (std::size_t k = 0; k < params.relations; ++k) {
              v += fwd.alpha(i, j, k) * fwd.gram[k][ga * total + gb] + fwd.alpha(j, i, k) * fwd.gram[k][gb * total + ga];
            }
            fwd.pair.set(i, j, a, b, v);
          }
        }
      }
    }
  }

  fwd.lbp = lbp_infer(psi, fwd.pair, hyper, keep_trace);

  const std::size_t H = params.hidden;
  fwd.shifted.resize(n);
  fwd.hidden.resize(n);
  fwd.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mm = fwd.lbp.max_marginals[i];
    const double peak = mm[argmax(mm)];
    fwd.shifted[i].resize(mm.size());
    fwd.hidden[i].resize(mm.size() * H);
    fwd.scores[i].resize(mm.size());
    for (std::size_t a = 0; a < mm.size(); ++a) {
      const double x0 = mm[a] - peak;
      const double x1 = doc.mentions[i].log_priors[a];
      fwd.shifted[i][a] = x0;
      double g = params.output_bias[0];
      for (std::size_t h = 0; h < H; ++h) {
        double pre = params.hidden_weight[2 * h] * x0 + params.hidden_weight[2 * h + 1] * x1 + params.hidden_bias[h];
        fwd.hidden[i][a * H + h] = pre;
        g += params.output_weight[h] * relu(pre);
      }
      fwd.scores[i][a] = g;
    }
  }
  return fwd;
}

namespace {

// Reverse pass through the unrolled LBP iterations. Fills psi and pair-table
// gradients from max-marginal gradients.
void backward_lbp(std::span<const std::vector<double>> psi, const LbpTrace& trace, const EDHyperParams& hyper,
                  std::span<const std::vector<double>> mbar_grad, std::vector<std::vector<double>>& psi_grad, PairTables& pair_grad) {
  const std::size_t n = psi.size();
  const auto& offsets = trace.offsets;
  auto msg_off = [&](std::size_t from, std::size_t to) { return offsets[from * n + to]; };
  const std::size_t total = trace.messages.front().size();
  const double damping = hyper.lbp_damping;

  std::vector<double> g_cur(total, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < psi[i].size(); ++a) psi_grad[i][a] += mbar_grad[i][a];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double* g = g_cur.data() + msg_off(j, i);
      for (std::size_t a = 0; a < psi[i].size(); ++a) g[a] += mbar_grad[i][a];
    }
  }

  std::vector<double> g_prev(total);
  std::vector<double> gc;
  std::vector<std::vector<double>> gh(n * n);
  for (std::size_t t = hyper.lbp_iterations; t >= 1; --t) {
    std::fill(g_prev.begin(), g_prev.end(), 0.0);
    const auto& arg = trace.arg[t - 1];
    const auto& top = trace.top[t - 1];
    std::vector<std::vector<double>> h_sum(n);
    for (std::size_t i = 0; i < n; ++i) h_sum[i].assign(psi[i].size(), 0.0);

    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t mi = psi[i].size();
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::size_t mj = psi[j].size();
        const std::size_t off = msg_off(i, j);
        gc.assign(g_cur.begin() + static_cast<std::ptrdiff_t>(off), g_cur.begin() + static_cast<std::ptrdiff_t>(off + mj));
        if (t >= 2) {
          for (std::size_t b = 0; b < mj; ++b) {
            g_prev[off + b] += damping * gc[b];
            gc[b] *= 1.0 - damping;
          }
        }
        // computed(b) = raw(b) - raw(top)
        double sum = std::accumulate(gc.begin(), gc.end(), 0.0);
        gc[top[i * n + j]] -= sum;
        auto& gh_ij = gh[i * n + j];
        gh_ij.assign(mi, 0.0);
        auto table_grad = pair_grad.table(i, j);
        for (std::size_t b = 0; b < mj; ++b) {
          const std::size_t a = arg[off + b];
          gh_ij[a] += gc[b];
          table_grad[a * mj + b] += gc[b];
        }
        for (std::size_t a = 0; a < mi; ++a) h_sum[i][a] += gh_ij[a];
      }
    }
    // h_ij(a) = psi_i(a) + sum_{l != i, j} msg_{l->i}(a)
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < psi[i].size(); ++a) psi_grad[i][a] += h_sum[i][a];
      if (t == 1) continue;  // iteration-0 messages are constants
      for (std::size_t l = 0; l < n; ++l) {
        if (l == i) continue;
        double* g = g_prev.data() + msg_off(l, i);
        const auto& gh_il = gh[i * n + l];
        for (std::size_t a = 0; a < psi[i].size(); ++a) g[a] += h_sum[i][a] - gh_il[a];
      }
    }
    std::swap(g_cur, g_prev);
  }
}

}  // namespace

void backward_document(const PreparedDocument& doc, const DocumentForward& fwd, std::span<const std::vector<double>> score_grads,
                       const EDModel& model, EDParams& grad) {
  const EDParams& params = model.params;
  const std::size_t n = doc.mentions.size();
  const std::size_t d = params.dim;
  const std::size_t H = params.hidden;
  if (n == 0) return;
  if (n >= 2 && fwd.lbp.trace.messages.empty()) {
    throw Error(ErrorCode::InvalidArgument, "backward_document needs a forward pass run with keep_trace");
  }

  // Final scorer.
  std::vector<std::vector<double>> mbar_grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = doc.mentions[i].size();
    std::vector<double> shifted_grad(m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      const double gs = score_grads[i][a];
      if (gs == 0.0) continue;
      grad.output_bias[0] += gs;
      for (std::size_t h = 0; h < H; ++h) {
        const double pre = fwd.hidden[i][a * H + h];
        if (pre <= 0.0) continue;
        grad.output_weight[h] += gs * pre;
        const double gp = gs * params.output_weight[h];
        grad.hidden_bias[h] += gp;
        grad.hidden_weight[2 * h] += gp * fwd.shifted[i][a];
        grad.hidden_weight[2 * h + 1] += gp * doc.mentions[i].log_priors[a];
        shifted_grad[a] += gp * params.hidden_weight[2 * h];
      }
    }
    // shifted = mbar - max(mbar)
    mbar_grad[i] = shifted_grad;
    const std::size_t peak = argmax(fwd.lbp.max_marginals[i]);
    mbar_grad[i][peak] -= std::accumulate(shifted_grad.begin(), shifted_grad.end(), 0.0);
  }

  std::vector<std::vector<double>> psi_grad(n);
  for (std::size_t i = 0; i < n; ++i) psi_grad[i].assign(doc.mentions[i].size(), 0.0);

  if (n == 1) {
    psi_grad[0] = mbar_grad[0];
  } else {
    std::vector<std::vector<double>> psi(n);
    std::vector<std::size_t> sizes(n);
    for (std::size_t i = 0; i < n; ++i) {
      psi[i] = fwd.local[i].psi;
      sizes[i] = psi[i].size();
    }
    PairTables pair_grad(sizes);
    backward_lbp(psi, fwd.lbp.trace, model.hyper, mbar_grad, psi_grad, pair_grad);

    // pair(i,j)(a,b) = phi_ij(a,b) + phi_ji(b,a); fold into per-ordered-pair phi gradients
    // laid out on the global candidate grid.
    const std::size_t total = fwd.candidate_offset[n];
    std::vector<double> phi_grad(total * total, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        auto tg = pair_grad.table(i, j);
        for (std::size_t a = 0; a < sizes[i]; ++a) {
          for (std::size_t b = 0; b < sizes[j]; ++b) {
            const std::size_t ga = fwd.candidate_offset[i] + a;
            const std::size_t gb = fwd.candidate_offset[j] + b;
            phi_grad[ga * total + gb] += tg[a * sizes[j] + b];
            phi_grad[gb * total + ga] += tg[a * sizes[j] + b];
          }
        }
      }
    }

    std::vector<double> all;
    all.reserve(total * d);
    for (const MentionInput& m : doc.mentions) all.insert(all.end(), m.candidate_vectors.begin(), m.candidate_vectors.end());

    const std::size_t K = params.relations;
    PairwiseAlpha alpha_grad(n, K);
    std::vector<double> weighted(total * total);
    std::vector<double> projected(d);
    for (std::size_t k = 0; k < K; ++k) {
      std::fill(weighted.begin(), weighted.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          double ga_sum = 0.0;
          for (std::size_t a = 0; a < sizes[i]; ++a) {
            const std::size_t ga = fwd.candidate_offset[i] + a;
            for (std::size_t b = 0; b < sizes[j]; ++b) {
              const std::size_t gb = fwd.candidate_offset[j] + b;
              const double g = phi_grad[ga * total + gb];
              ga_sum += g * fwd.gram[k][ga * total + gb];
              weighted[ga * total + gb] = g * fwd.alpha(i, j, k);
            }
          }
          alpha_grad(i, j, k) = ga_sum;
        }
      }
      // dR_k[c] = sum_{A,B} weighted[A][B] e_A[c] e_B[c]
      double* gr = grad.relation_diag.data() + k * d;
      for (std::size_t A = 0; A < total; ++A) {
        std::fill(projected.begin(), projected.end(), 0.0);
        for (std::size_t B = 0; B < total; ++B) {
          const double w = weighted[A * total + B];
          if (w == 0.0) continue;
          const double* eb = all.data() + B * d;
          for (std::size_t c = 0; c < d; ++c) projected[c] += w * eb[c];
        }
        const double* ea = all.data() + A * d;
        for (std::size_t c = 0; c < d; ++c) gr[c] += ea[c] * projected[c];
      }
    }

    // Softmax over j != i, then the bilinear logits.
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<std::vector<double>> f_grad(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) dot += fwd.alpha(i, j, k) * alpha_grad(i, j, k);
        }
        const double* dk = params.pair_diag.data() + k * d;
        double* gdk = grad.pair_diag.data() + k * d;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double gs = fwd.alpha(i, j, k) * (alpha_grad(i, j, k) - dot) * scale;
          if (gs == 0.0) continue;
          const auto& fi = fwd.f[i];
          const auto& fj = fwd.f[j];
          for (std::size_t c = 0; c < d; ++c) {
            gdk[c] += gs * fi[c] * fj[c];
            f_grad[i][c] += gs * dk[c] * fj[c];
            f_grad[j][c] += gs * dk[c] * fi[c];
          }
        }
      }
    }

    // f = tanh(W x + b)
    for (std::size_t i = 0; i < n; ++i) {
      const MentionInput& m = doc.mentions[i];
      for (std::size_t r = 0; r < d; ++r) {
        const double gz = f_grad[i][r] * (1.0 - fwd.f[i][r] * fwd.f[i][r]);
        if (gz == 0.0) continue;
        grad.encoder_bias[r] += gz;
        double* gw = grad.encoder_weight.data() + r * 2 * d;
        for (std::size_t q = 0; q < d; ++q) gw[q] += gz * m.mention_mean[q];
        for (std::size_t q = 0; q < d; ++q) gw[d + q] += gz * m.context_mean[q];
      }
    }
  }

  // Local attention scores.
  for (std::size_t i = 0; i < n; ++i) {
    const MentionInput& m = doc.mentions[i];
    const LocalScores& local = fwd.local[i];
    if (local.kept.empty()) continue;
    std::vector<double> mix_grad(d, 0.0);
    for (std::size_t a = 0; a < m.size(); ++a) {
      const double g = psi_grad[i][a];
      if (g == 0.0) continue;
      auto e = m.candidate(a, d);
      for (std::size_t c = 0; c < d; ++c) {
        mix_grad[c] += g * e[c] * params.local_diag[c];
        grad.local_diag[c] += g * e[c] * local.mix[c];
      }
    }
    const std::size_t kept = local.kept.size();
    std::vector<double> beta_grad(kept);
    double dot = 0.0;
    for (std::size_t r = 0; r < kept; ++r) {
      auto w = m.context(local.kept[r], d);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += mix_grad[c] * w[c];
      beta_grad[r] = s;
      dot += local.beta[r] * s;
    }
    for (std::size_t r = 0; r < kept; ++r) {
      const double gu = local.beta[r] * (beta_grad[r] - dot);
      if (gu == 0.0) continue;
      auto w = m.context(local.kept[r], d);
      auto e = m.candidate(local.best[r], d);
      for (std::size_t c = 0; c < d; ++c) grad.attention_diag[c] += gu * e[c] * w[c];
    }
  }
}

std::vector<std::size_t> decide(const PreparedDocument& doc, const DocumentForward& fwd) {
  std::vector<std::size_t> choice(doc.mentions.size(), 0);
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const auto& scores = fwd.scores[i];
    const auto& cands = doc.mentions[i].candidates;
    std::size_t best = 0;
    for (std::size_t a = 1; a < scores.size(); ++a) {
      if (scores[a] > scores[best] || (scores[a] == scores[best] && cands[a].entity < cands[best].entity)) best = a;
    }
    choice[i] = best;
  }
  return choice;
}

std::vector<Annotation> annotate(const Document& doc, const PreparedDocument& prepared, const DocumentForward& fwd,
                                 const KnowledgeStore& store, const EDModel& model) {
  auto choice = decide(prepared, fwd);
  std::vector<Annotation> out;
  out.reserve(choice.size());
  for (std::size_t i = 0; i < choice.size(); ++i) {
    const MentionInput& m = prepared.mentions[i];
    Annotation ann;
    ann.start = m.span.start;
    ann.length = m.span.length;
    ann.surface = doc.substring(m.span.start, m.span.length);
    ann.entity_id = m.candidates[choice[i]].entity;
    ann.entity = std::string(store.entity_title(ann.entity_id));
    ann.score = fwd.scores[i][choice[i]];
    ann.ed_confidence = model.params.calibration.apply(ann.score);
    ann.md_confidence = m.span.md_confidence;
    ann.tag = m.span.tag;
    out.push_back(std::move(ann));
  }
  std::stable_sort(out.begin(), out.end(), [](const Annotation& a, const Annotation& b) { return a.start < b.start; });
  return out;
}

std::vector<Annotation> disambiguate_document(const Document& doc, std::span<const Span> spans, const KnowledgeStore& store,
                                              const EDModel& model, const SelectionParams& selection) {
  PreparedDocument prepared = prepare_document(doc, spans, store, selection);
  DocumentForward fwd = forward_document(prepared, model);
  return annotate(doc, prepared, fwd, store, model);
}

}  // namespace relink
