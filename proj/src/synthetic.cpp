#include "tsrag/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "tsrag/kmeans.hpp"

namespace tsrag {

MotifBank::MotifBank(std::size_t domains, std::size_t motifs_per_domain, std::uint64_t seed)
    : domains_(domains), motifs_(motifs_per_domain) {
  Rng rng(seed * 7919 + 17);
  waves_.resize(domains * motifs_per_domain);
  for (auto& comps : waves_) {
    for (int c = 0; c < 3; ++c)
      comps.push_back({rng.uniform(0.3, 1.0), rng.uniform(8.0, 64.0),
                       rng.uniform(0.0, 2.0 * std::numbers::pi)});
  }
}

double MotifBank::value(std::size_t domain, std::size_t motif, double t) const {
  double v = 0.0;
  for (const auto& w : waves_[domain * motifs_ + motif])
    v += w.amplitude * std::sin(2.0 * std::numbers::pi * t / w.period + w.phase);
  return v;
}

std::string MotifBank::domain_name(std::size_t index) {
  static const char* kNames[] = {"Energy", "Health", "IoT", "Nature", "Web", "Transport",
                                 "Environment"};
  if (index < std::size(kNames)) return kNames[index];
  return "Domain" + std::to_string(index);
}

namespace {

SeriesWindow motif_instance(const MotifBank& bank, const RetrievalCorpusSpec& spec,
                            std::size_t domain, std::size_t motif, const std::string& parent,
                            Rng& rng) {
  SeriesWindow w;
  w.domain = MotifBank::domain_name(domain);
  w.parent_id = parent;
  const double shift = rng.uniform(-spec.jitter, spec.jitter);
  const double gain = rng.uniform(0.5, 3.0);
  const double level = rng.uniform(-5.0, 5.0);
  w.values.resize(spec.window);
  for (std::size_t t = 0; t < spec.window; ++t)
    w.values[t] = level + gain * (bank.value(domain, motif, static_cast<double>(t) + shift) +
                                  spec.noise * rng.normal());
  return w;
}

}  // namespace

std::vector<SeriesWindow> make_retrieval_corpus(const RetrievalCorpusSpec& spec) {
  MotifBank bank(spec.domains, spec.motifs_per_domain, spec.seed);
  Rng rng(spec.seed);
  std::vector<SeriesWindow> out;
  out.reserve(spec.windows);
  const std::size_t groups = spec.domains * spec.motifs_per_domain;
  for (std::size_t i = 0; i < spec.windows; ++i) {
    const std::size_t g = i % groups;
    out.push_back(motif_instance(bank, spec, g / spec.motifs_per_domain,
                                 g % spec.motifs_per_domain, "syn" + std::to_string(i), rng));
  }
  return out;
}

std::vector<SeriesWindow> make_retrieval_queries(const RetrievalCorpusSpec& spec, std::size_t count,
                                                 std::uint64_t seed) {
  MotifBank bank(spec.domains, spec.motifs_per_domain, spec.seed);
  Rng rng(seed ^ 0xa5a5a5a5ull);
  std::vector<SeriesWindow> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t domain = rng.below(spec.domains);
    const std::size_t motif = rng.below(spec.motifs_per_domain);
    out.push_back(motif_instance(bank, spec, domain, motif, "query" + std::to_string(i), rng));
  }
  return out;
}

std::vector<StoreRecord> make_forecast_corpus(const ForecastCorpusSpec& spec) {
  MotifBank bank(spec.domains, 1, spec.seed);
  Rng rng(spec.seed + 1);
  std::vector<StoreRecord> out;
  for (std::size_t d = 0; d < spec.domains; ++d) {
    for (std::size_t s = 0; s < spec.series_per_domain; ++s) {
      const double phase = rng.uniform(0.0, 256.0);
      const double gain = rng.uniform(1.0, 4.0);
      const double level = rng.uniform(-10.0, 10.0);
      const double slope = rng.uniform(-0.004, 0.004);
      std::vector<double> values(spec.length);
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double tt = static_cast<double>(t);
        values[t] = level + slope * tt +
                    gain * (bank.value(d, 0, tt + phase) + spec.noise * rng.normal());
      }
      out.push_back(make_record(MotifBank::domain_name(d),
                                "synthetic_" + std::to_string(d) + "_" + std::to_string(s),
                                "2020-01-01 00:00:00", "Hourly", std::move(values)));
    }
  }
  return out;
}

}  // namespace tsrag
