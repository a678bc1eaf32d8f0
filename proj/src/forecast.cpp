#include "tsrag/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"
#include "tsrag/kmeans.hpp"

namespace tsrag {

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::pair<std::size_t, std::size_t> split_bounds(std::size_t n) {
  return {n * 6 / 10, n * 8 / 10};
}

ForecastOptions ForecastOptions::from_config(const RunConfig& c) {
  ForecastOptions o;
  o.window = c.window;
  o.horizon = c.horizon;
  o.sample_stride = c.effective_sample_stride();
  o.k = c.k;
  o.rho = c.rho;
  o.probes = c.probes;
  o.d = c.d;
  o.h = c.h;
  o.epochs = c.epochs;
  o.batch = c.batch;
  o.lr = c.lr;
  o.loss = c.loss();
  o.seed = c.seed;
  return o;
}

std::vector<ForecastCase> make_cases(const std::vector<StoreRecord>& records,
                                     const SeriesTree* tree, const ForecastOptions& o,
                                     Split split) {
  if (o.use_retrieval) {
    if (tree == nullptr) throw ConfigError("retrieval needs a tree");
    if (tree->window_size() != o.window)
      throw ConfigError("tree window " + std::to_string(tree->window_size()) +
                        " does not match window " + std::to_string(o.window));
  }
  std::vector<ForecastCase> out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t n = rec.target.size();
    const auto [a, b] = split_bounds(n);
    const std::size_t lo = split == Split::Train ? 0 : split == Split::Val ? a : b;
    const std::size_t hi = split == Split::Train ? a : split == Split::Val ? b : n;
    for (std::size_t t = std::max(lo, o.window); t + o.horizon <= hi; t += o.sample_stride) {
      ForecastCase c;
      c.record = r;
      c.anchor = t;
      auto ctx = std::span<const double>(rec.target).subspan(t - o.window, o.window);
      auto norm = normalize(ctx);
      c.stats = norm.stats;
      c.future.assign(rec.target.begin() + t, rec.target.begin() + t + o.horizon);
      std::vector<double> truth(o.horizon);
      for (std::size_t i = 0; i < o.horizon; ++i)
        truth[i] = (c.future[i] - c.stats.loc) / c.stats.scale;

      std::vector<std::vector<double>> retrieved;
      if (o.use_retrieval) {
        Query q;
        q.target = norm.values;
        q.domain = rec.domain_category;
        q.k = o.k;
        q.rho = o.rho;
        q.probes = o.probes;
        const std::string& parent = rec.item_id;
        const std::string& domain = rec.domain_category;
        q.admit = [&parent, &domain, t, w = o.window](const SeriesWindow& win) {
          return !(win.parent_id == parent && win.domain == domain && win.offset + w > t);
        };
        auto res = retrieve_topk(q, *tree);
        c.hits = std::move(res.hits);
        for (const auto& hit : c.hits)
          retrieved.push_back(normalize(tree->windows()[hit.handle].values).values);
      }
      c.sample = FusionSample::make(std::move(norm.values), std::move(truth), retrieved);
      out.push_back(std::move(c));
    }
  }
  return out;
}

SplitScore evaluate(const std::vector<ForecastCase>& cases, const ModelParams& params,
                    bool use_retrieval) {
  SplitScore s;
  s.samples = cases.size();
  if (cases.empty()) return s;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& c : cases) {
    auto pred = denormalize_forecast(predict(c.sample, params, use_retrieval), c.stats);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = pred[i] - c.future[i];
      sum += e * e;
      ++count;
    }
  }
  s.mse = sum / static_cast<double>(count);
  return s;
}

namespace {

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for_each_tensor(p, [&](std::string_view, std::span<const double> t) {
    out.insert(out.end(), t.begin(), t.end());
  });
  return out;
}

void unflatten(ModelParams& p, const std::vector<double>& flat) {
  std::size_t at = 0;
  for_each_tensor(p, [&](std::string_view, std::span<double> t) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(at), t.size(), t.begin());
    at += t.size();
  });
}

class Adam {
 public:
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::vector<double>& x, const std::vector<double>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g[i] * g[i];
      x[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace

ForecastReport run_forecast(const std::vector<StoreRecord>& records, const SeriesTree* tree,
                            const ForecastOptions& o) {
  o.loss.validate();
  if (o.batch == 0 || o.epochs == 0 || o.sample_stride == 0 || o.horizon == 0 || o.window == 0)
    throw ConfigError("batch, epochs, sample_stride, horizon and window must be positive");
  auto train = make_cases(records, tree, o, Split::Train);
  auto val = make_cases(records, tree, o, Split::Val);
  auto test = make_cases(records, tree, o, Split::Test);
  if (train.empty()) throw DataError("no training samples: series too short for window + horizon");

  ForecastReport report;
  report.arm = o.use_retrieval ? "rag" : "ablate";
  report.seed = o.seed;

  auto params = ModelParams::init(o.window, o.horizon, o.d, o.h, o.seed);
  auto flat = flatten(params);
  Adam adam(flat.size(), o.lr);
  Rng rng(o.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  ModelParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<FusionSample> batch;
  for (std::size_t epoch = 1; epoch <= o.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t at = 0; at < order.size(); at += o.batch) {
      batch.clear();
      for (std::size_t j = at; j < std::min(order.size(), at + o.batch); ++j)
        batch.push_back(train[order[j]].sample);
      auto g = gradients(batch, params, o.loss, o.use_retrieval);
      adam.step(flat, flatten(g.grad));
      unflatten(params, flat);
    }
    // Without a validation split the last epoch is kept.
    const double v = val.empty() ? -static_cast<double>(epoch) : evaluate(val, params, o.use_retrieval).mse;
    report.val_history.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = params;
      report.best_epoch = epoch;
    }
  }
  report.train = evaluate(train, best, o.use_retrieval);
  report.val = evaluate(val, best, o.use_retrieval);
  report.test = evaluate(test, best, o.use_retrieval);
  report.params = std::move(best);
  return report;
}

ForecastReport run_external_forecast(const std::vector<StoreRecord>& records,
                                     const SeriesTree* tree, const ForecastOptions& o,
                                     const ExternalBackend& backend) {
  auto test = make_cases(records, tree, o, Split::Test);
  ForecastReport report;
  report.arm = "external";
  report.seed = o.seed;
  report.test.samples = test.size();
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& c : test) {
    const auto& rec = records[c.record];
    PromptMetadata meta{rec.domain_category, rec.item_id, rec.freq};
    auto prompt = build_prompt(c.sample.t_norm, c.sample.raw_mean, c.sample.raw_product, c.hits,
                               meta, o.horizon);
    auto pred = denormalize_forecast(backend.forecast(prompt, o.horizon), c.stats);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = pred[i] - c.future[i];
      sum += e * e;
      ++count;
    }
  }
  if (count > 0) report.test.mse = sum / static_cast<double>(count);
  return report;
}

std::string ForecastReport::to_csv() const {
  std::ostringstream out;
  out << "arm,seed,split,samples,mse,best_epoch\n";
  auto row = [&](const char* name, const SplitScore& s) {
    out << arm << ',' << seed << ',' << name << ',' << s.samples << ',' << shortest(s.mse) << ','
        << best_epoch << '\n';
  };
  if (train) row("train", *train);
  if (val) row("val", *val);
  row("test", test);
  return out.str();
}

}  // namespace tsrag
