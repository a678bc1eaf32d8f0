#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsrag/series.hpp"
#include "tsrag/storage.hpp"

namespace tsrag {

/// Seeded bank of periodic motifs: each (domain, motif) pair is a sum of three
/// sinusoids with periods between 8 and 64 steps.
class MotifBank {
 public:
  MotifBank(std::size_t domains, std::size_t motifs_per_domain, std::uint64_t seed);

  double value(std::size_t domain, std::size_t motif, double t) const;
  std::size_t domains() const { return domains_; }
  std::size_t motifs_per_domain() const { return motifs_; }

  /// "Energy", "Health", "IoT", "Nature", "Web", "Transport", "Environment", then "Domain<i>".
  static std::string domain_name(std::size_t index);

 private:
  struct Wave {
    double amplitude, period, phase;
  };
  std::size_t domains_, motifs_;
  std::vector<std::vector<Wave>> waves_;  // (domain * motifs + motif) -> components
};

struct RetrievalCorpusSpec {
  std::size_t windows = 10000;
  std::size_t window = 64;
  std::size_t domains = 4;
  std::size_t motifs_per_domain = 8;
  double noise = 0.3;    // relative to unit motif amplitude
  double jitter = 2.0;   // max phase shift of an instance, in steps
  std::uint64_t seed = 0;
};

/// Raw (unnormalized) windows: random gain and offset applied to a jittered,
/// noisy motif. Windows are spread round-robin over domains and motifs.
std::vector<SeriesWindow> make_retrieval_corpus(const RetrievalCorpusSpec& spec);

/// Fresh instances from the same motif bank, tagged with their domain.
std::vector<SeriesWindow> make_retrieval_queries(const RetrievalCorpusSpec& spec, std::size_t count,
                                                 std::uint64_t seed);

struct ForecastCorpusSpec {
  std::size_t domains = 4;
  std::size_t series_per_domain = 6;
  std::size_t length = 720;
  double noise = 0.35;
  std::uint64_t seed = 0;
};

/// Long series per domain sharing that domain's motif, each with its own
/// phase, gain, level, slow trend and noise.
std::vector<StoreRecord> make_forecast_corpus(const ForecastCorpusSpec& spec);

}  // namespace tsrag
