#include "tsrag/msil.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"
#include "tsrag/kmeans.hpp"

namespace tsrag {

double Mlp::apply(double x) const {
  double y = b2;
  for (std::size_t j = 0; j < w1.size(); ++j) {
    const double a = w1[j] * x + b1[j];
    if (a > 0.0) y += w2[j] * a;
  }
  return y;
}

namespace {

void fill_uniform(std::vector<double>& v, std::size_t n, double fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  v.resize(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
}

Mlp init_mlp(std::size_t h, Rng& rng) {
  Mlp m;
  fill_uniform(m.w1, h, 1.0, rng);
  fill_uniform(m.b1, h, 1.0, rng);
  fill_uniform(m.w2, h, static_cast<double>(h), rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  m.b2 = rng.uniform(-bound, bound);
  return m;
}

Mlp zero_mlp(std::size_t h) {
  Mlp m;
  m.w1.assign(h, 0.0);
  m.b1.assign(h, 0.0);
  m.w2.assign(h, 0.0);
  return m;
}

void check_series(std::span<const std::vector<double>> series) {
  if (series.empty()) throw DataError("no retrieved series");
  const std::size_t w = series[0].size();
  for (const auto& s : series)
    if (s.size() != w) throw DataError("retrieved series differ in length");
}

}  // namespace

FusionParams FusionParams::init(std::size_t d, std::size_t h, std::uint64_t seed) {
  if (d < 1 || h < 1) throw ConfigError("embedding dim d and hidden width h must be >= 1");
  Rng rng(seed);
  FusionParams p;
  p.d = d;
  p.h = h;
  fill_uniform(p.w_q, d, 1.0, rng);
  fill_uniform(p.w_k, d, 1.0, rng);
  fill_uniform(p.w_v, d, 1.0, rng);
  p.mlp1 = init_mlp(h, rng);
  p.mlp2 = init_mlp(h, rng);
  return p;
}

FusionParams FusionParams::zeros(std::size_t d, std::size_t h) {
  FusionParams p;
  p.d = d;
  p.h = h;
  p.w_q.assign(d, 0.0);
  p.w_k.assign(d, 0.0);
  p.w_v.assign(d, 0.0);
  p.mlp1 = zero_mlp(h);
  p.mlp2 = zero_mlp(h);
  return p;
}

ModelParams ModelParams::init(std::size_t context, std::size_t horizon, std::size_t d,
                              std::size_t h, std::uint64_t seed) {
  ModelParams m;
  m.fusion = FusionParams::init(d, h, seed);
  m.head = LinearHead(context, horizon);
  Rng rng(seed ^ 0x5bd1e995u);
  const double bound = 1.0 / std::sqrt(static_cast<double>(context));
  for (auto& x : m.head.weights) x = rng.uniform(-bound, bound);
  for (auto& x : m.head.bias) x = rng.uniform(-bound, bound);
  return m;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.fusion = FusionParams::zeros(fusion.d, fusion.h);
  z.head = LinearHead(head.context, head.horizon);
  return z;
}

void for_each_tensor(ModelParams& p,
                     const std::function<void(std::string_view, std::span<double>)>& fn) {
  fn("fusion.w_q", p.fusion.w_q);
  fn("fusion.w_k", p.fusion.w_k);
  fn("fusion.w_v", p.fusion.w_v);
  fn("mlp1.w1", p.fusion.mlp1.w1);
  fn("mlp1.b1", p.fusion.mlp1.b1);
  fn("mlp1.w2", p.fusion.mlp1.w2);
  fn("mlp1.b2", std::span<double>(&p.fusion.mlp1.b2, 1));
  fn("mlp2.w1", p.fusion.mlp2.w1);
  fn("mlp2.b1", p.fusion.mlp2.b1);
  fn("mlp2.w2", p.fusion.mlp2.w2);
  fn("mlp2.b2", std::span<double>(&p.fusion.mlp2.b2, 1));
  fn("head.weights", p.head.weights);
  fn("head.bias", p.head.bias);
}

void for_each_tensor(const ModelParams& p,
                     const std::function<void(std::string_view, std::span<const double>)>& fn) {
  auto& mut = const_cast<ModelParams&>(p);
  for_each_tensor(mut, [&](std::string_view name, std::span<double> t) { fn(name, t); });
}

std::string encode_params(const ModelParams& params) {
  std::ostringstream out;
  out << "tsrag-params v1\n";
  out << "d " << params.fusion.d << " h " << params.fusion.h << " context " << params.head.context
      << " horizon " << params.head.horizon << "\n";
  for_each_tensor(params, [&](std::string_view name, std::span<const double> t) {
    std::size_t rows = t.size(), cols = 1;
    if (name == "head.weights") {
      rows = params.head.horizon;
      cols = params.head.context;
    } else if (name.ends_with(".w2")) {
      rows = 1;
      cols = t.size();
    }
    out << name << ' ' << rows << ' ' << cols;
    for (double v : t) out << ' ' << shortest(v);
    out << '\n';
  });
  return out.str();
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out << encode_params(params);
  if (!out) throw DataError("write failed: " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "tsrag-params v1")
    throw DataError(path.string() + ": not a parameter checkpoint");
  std::string kd, kh, kc, kH;
  std::size_t d = 0, h = 0, context = 0, horizon = 0;
  if (!(in >> kd >> d >> kh >> h >> kc >> context >> kH >> horizon) || kd != "d" || kh != "h" ||
      kc != "context" || kH != "horizon")
    throw DataError(path.string() + ": malformed checkpoint header");
  ModelParams p;
  p.fusion = FusionParams::zeros(d, h);
  p.head = LinearHead(context, horizon);
  for_each_tensor(p, [&](std::string_view name, std::span<double> t) {
    std::string got;
    std::size_t rows = 0, cols = 0;
    if (!(in >> got >> rows >> cols) || got != name || rows * cols != t.size())
      throw DataError(path.string() + ": tensor '" + std::string(name) + "' missing or misshapen");
    for (auto& v : t) {
      std::string tok;
      if (!(in >> tok) || !parse_double(tok, v))
        throw DataError(path.string() + ": bad value in tensor '" + std::string(name) + "'");
    }
  });
  return p;
}

std::pair<std::vector<Hit>, std::vector<Hit>> partition_domains(const std::string& target_domain,
                                                                std::span<const Hit> hits) {
  std::pair<std::vector<Hit>, std::vector<Hit>> out;
  for (const auto& h : hits) (h.domain == target_domain ? out.first : out.second).push_back(h);
  return out;
}

std::vector<double> raw_interaction(std::span<const std::vector<double>> series) {
  check_series(series);
  const std::size_t w = series[0].size();
  std::vector<double> prod(w);
  std::vector<double> column(series.size());
  for (std::size_t t = 0; t < w; ++t) {
    for (std::size_t i = 0; i < series.size(); ++i) column[i] = series[i][t];
    std::sort(column.begin(), column.end());
    double p = 1.0;
    for (double v : column) p *= v;
    prod[t] = p;
  }
  double norm = 0.0;
  for (double v : prod) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < kProductNormFloor && norm > 0.0) {
    // Rescale tiny products so the direction survives and the output stays unit-norm.
    double peak = 0.0;
    for (double v : prod) peak = std::max(peak, std::abs(v));
    for (double& v : prod) v /= peak;
    norm = 0.0;
    for (double v : prod) norm += v * v;
    norm = std::sqrt(norm);
  }
  const double denom = std::max(norm, kProductNormFloor);
  for (double& v : prod) v /= denom;
  return prod;
}

std::vector<double> raw_average(std::span<const std::vector<double>> series) {
  check_series(series);
  const std::size_t w = series[0].size();
  std::vector<double> mean(w);
  std::vector<double> column(series.size());
  const double n = static_cast<double>(series.size());
  for (std::size_t t = 0; t < w; ++t) {
    for (std::size_t i = 0; i < series.size(); ++i) column[i] = series[i][t];
    std::sort(column.begin(), column.end());
    if (column.front() == column.back()) {
      mean[t] = column.front();  // exact for repeated values
      continue;
    }
    double s = 0.0;
    for (double v : column) s += v;
    mean[t] = s / n;
  }
  return mean;
}

std::pair<std::vector<double>, std::vector<double>> interaction_pattern(
    std::span<const std::vector<double>> series, const FusionParams& params) {
  auto raw = raw_interaction(series);
  std::vector<double> p(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) p[t] = params.mlp1.apply(raw[t]);
  return {std::move(p), std::move(raw)};
}

std::pair<std::vector<double>, std::vector<double>> average_pattern(
    std::span<const std::vector<double>> series, const FusionParams& params) {
  auto raw = raw_average(series);
  std::vector<double> p(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) p[t] = params.mlp2.apply(raw[t]);
  return {std::move(p), std::move(raw)};
}

PatternSet extract_patterns(std::span<const std::vector<double>> series,
                            const FusionParams& params) {
  PatternSet ps;
  std::tie(ps.p_int, ps.raw_product) = interaction_pattern(series, params);
  std::tie(ps.p_avg, ps.raw_mean) = average_pattern(series, params);
  return ps;
}

namespace {

// Forward intermediates of one sample, kept for the backward pass.
struct Trace {
  std::size_t w = 0, d = 0;
  std::vector<double> p_int, p_avg;
  std::vector<double> q, k, v;   // w x d
  std::vector<double> a;         // w x w attention
  std::vector<double> o;         // w x d
  std::vector<double> fused;     // w
  std::vector<double> pred;      // H
};

void attention_forward(std::span<const double> t_norm, std::span<const double> p_avg,
                       std::span<const double> p_int, const FusionParams& fp, Trace& tr,
                       std::vector<double>& r_fused) {
  const std::size_t w = t_norm.size(), d = fp.d;
  if (p_avg.size() != w || p_int.size() != w)
    throw DataError("attention inputs differ in length");
  if (d < 1 || fp.w_q.size() != d || fp.w_k.size() != d || fp.w_v.size() != d)
    throw ConfigError("attention projections must have length d >= 1");
  tr.w = w;
  tr.d = d;
  tr.q.assign(w * d, 0.0);
  tr.k.assign(w * d, 0.0);
  tr.v.assign(w * d, 0.0);
  for (std::size_t t = 0; t < w; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      tr.q[t * d + j] = t_norm[t] * fp.w_q[j];
      tr.k[t * d + j] = p_avg[t] * fp.w_k[j];
      tr.v[t * d + j] = p_int[t] * fp.w_v[j];
    }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  tr.a.assign(w * w, 0.0);
  for (std::size_t t = 0; t < w; ++t) {
    double* row = tr.a.data() + t * w;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < w; ++s) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += tr.q[t * d + j] * tr.k[s * d + j];
      row[s] = dot * inv_sqrt_d;
      mx = std::max(mx, row[s]);
    }
    double z = 0.0;
    for (std::size_t s = 0; s < w; ++s) {
      row[s] = std::exp(row[s] - mx);
      z += row[s];
    }
    for (std::size_t s = 0; s < w; ++s) row[s] /= z;
  }
  tr.o.assign(w * d, 0.0);
  r_fused.assign(w, 0.0);
  for (std::size_t t = 0; t < w; ++t) {
    for (std::size_t s = 0; s < w; ++s) {
      const double at = tr.a[t * w + s];
      for (std::size_t j = 0; j < d; ++j) tr.o[t * d + j] += at * tr.v[s * d + j];
    }
    double r = 0.0;
    for (std::size_t j = 0; j < d; ++j) r += tr.o[t * d + j] * fp.w_v[j];
    r_fused[t] = r;
  }
}

void forward(const FusionSample& s, const ModelParams& p, bool use_retrieval, Trace& tr) {
  const std::size_t w = s.t_norm.size();
  if (w != p.head.context)
    throw DataError("sample context " + std::to_string(w) + " does not match head context " +
                    std::to_string(p.head.context));
  tr.fused = s.t_norm;
  if (use_retrieval && s.has_retrieval()) {
    tr.p_int.resize(w);
    tr.p_avg.resize(w);
    for (std::size_t t = 0; t < w; ++t) {
      tr.p_int[t] = p.fusion.mlp1.apply(s.raw_product[t]);
      tr.p_avg[t] = p.fusion.mlp2.apply(s.raw_mean[t]);
    }
    std::vector<double> r;
    attention_forward(s.t_norm, tr.p_avg, tr.p_int, p.fusion, tr, r);
    for (std::size_t t = 0; t < w; ++t) tr.fused[t] += r[t];
  } else {
    tr.w = 0;
  }
  tr.pred = p.head.apply(tr.fused);
}

void mlp_backward(const Mlp& m, double x, double dy, Mlp& g) {
  g.b2 += dy;
  for (std::size_t j = 0; j < m.w1.size(); ++j) {
    const double a = m.w1[j] * x + m.b1[j];
    if (a <= 0.0) continue;
    g.w2[j] += dy * a;
    const double da = dy * m.w2[j];
    g.w1[j] += da * x;
    g.b1[j] += da;
  }
}

void backward(const FusionSample& s, const ModelParams& p, const Trace& tr,
              std::span<const double> dpred, ModelParams& g) {
  const std::size_t w = s.t_norm.size(), horizon = p.head.horizon;
  std::vector<double> dfused(w, 0.0);
  for (std::size_t o = 0; o < horizon; ++o) {
    g.head.bias[o] += dpred[o];
    const double* row = p.head.weights.data() + o * w;
    double* grow = g.head.weights.data() + o * w;
    for (std::size_t i = 0; i < w; ++i) {
      grow[i] += dpred[o] * tr.fused[i];
      dfused[i] += row[i] * dpred[o];
    }
  }
  if (tr.w == 0) return;

  const std::size_t d = tr.d;
  const auto& fp = p.fusion;
  auto& gf = g.fusion;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  // r[t] = sum_j o[t, j] * w_v[j]
  std::vector<double> d_o(w * d);
  for (std::size_t t = 0; t < w; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      d_o[t * d + j] = dfused[t] * fp.w_v[j];
      gf.w_v[j] += dfused[t] * tr.o[t * d + j];
    }
  // o = a v
  std::vector<double> d_v(w * d, 0.0), d_s(w * w);
  for (std::size_t t = 0; t < w; ++t) {
    double row_dot = 0.0;
    for (std::size_t s2 = 0; s2 < w; ++s2) {
      double da = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        da += d_o[t * d + j] * tr.v[s2 * d + j];
        d_v[s2 * d + j] += tr.a[t * w + s2] * d_o[t * d + j];
      }
      d_s[t * w + s2] = da;
      row_dot += tr.a[t * w + s2] * da;
    }
    // softmax
    for (std::size_t s2 = 0; s2 < w; ++s2)
      d_s[t * w + s2] = tr.a[t * w + s2] * (d_s[t * w + s2] - row_dot);
  }
  // scores = q k^T / sqrt(d)
  std::vector<double> d_q(w * d, 0.0), d_k(w * d, 0.0);
  for (std::size_t t = 0; t < w; ++t)
    for (std::size_t s2 = 0; s2 < w; ++s2) {
      const double ds = d_s[t * w + s2] * inv_sqrt_d;
      if (ds == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        d_q[t * d + j] += ds * tr.k[s2 * d + j];
        d_k[s2 * d + j] += ds * tr.q[t * d + j];
      }
    }
  for (std::size_t t = 0; t < w; ++t) {
    double dp_avg = 0.0, dp_int = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      gf.w_q[j] += s.t_norm[t] * d_q[t * d + j];
      gf.w_k[j] += tr.p_avg[t] * d_k[t * d + j];
      gf.w_v[j] += tr.p_int[t] * d_v[t * d + j];
      dp_avg += d_k[t * d + j] * fp.w_k[j];
      dp_int += d_v[t * d + j] * fp.w_v[j];
    }
    mlp_backward(fp.mlp1, s.raw_product[t], dp_int, gf.mlp1);
    mlp_backward(fp.mlp2, s.raw_mean[t], dp_avg, gf.mlp2);
  }
}

}  // namespace

AttentionOutput cross_attention(std::span<const double> t_norm, std::span<const double> p_avg,
                                std::span<const double> p_int, const FusionParams& params) {
  Trace tr;
  AttentionOutput out;
  attention_forward(t_norm, p_avg, p_int, params, tr, out.r_fused);
  const std::size_t w = t_norm.size();
  out.weights.assign(w, std::vector<double>(w));
  for (std::size_t t = 0; t < w; ++t)
    for (std::size_t s = 0; s < w; ++s) out.weights[t][s] = tr.a[t * w + s];
  return out;
}

FusionSample FusionSample::make(std::vector<double> t_norm, std::vector<double> truth,
                                std::span<const std::vector<double>> retrieved) {
  FusionSample s;
  s.t_norm = std::move(t_norm);
  s.truth = std::move(truth);
  if (!retrieved.empty()) {
    for (const auto& r : retrieved)
      if (r.size() != s.t_norm.size())
        throw DataError("retrieved series length does not match the target");
    s.raw_product = raw_interaction(retrieved);
    s.raw_mean = raw_average(retrieved);
  }
  return s;
}

std::vector<double> predict(const FusionSample& sample, const ModelParams& params,
                            bool use_retrieval) {
  Trace tr;
  forward(sample, params, use_retrieval, tr);
  return tr.pred;
}

GradientResult gradients(std::span<const FusionSample> batch, const ModelParams& params,
                         const LossConfig& loss, bool use_retrieval) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<Trace> traces(batch.size());
  Matrix pred(batch.size()), truth(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward(batch[i], params, use_retrieval, traces[i]);
    pred[i] = traces[i].pred;
    truth[i] = batch[i].truth;
  }
  GradientResult res;
  Matrix dpred;
  res.loss = total_loss_grad(pred, truth, loss, dpred);
  res.grad = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i)
    backward(batch[i], params, traces[i], dpred[i], res.grad);
  return res;
}

double batch_loss(std::span<const FusionSample> batch, const ModelParams& params,
                  const LossConfig& loss, bool use_retrieval) {
  if (batch.empty()) throw DataError("empty batch");
  Matrix pred(batch.size()), truth(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    pred[i] = predict(batch[i], params, use_retrieval);
    truth[i] = batch[i].truth;
  }
  return total_loss(pred, truth, loss);
}

}  // namespace tsrag
