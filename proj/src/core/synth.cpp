#include "core/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "core/seed.hpp"

namespace rtf {

std::vector<std::string> synth_alphabet(std::size_t tokens) {
  static const char* const kNames[] = {
      "ldrloaddll",        "ldrgetprocedureaddress", "ntallocatevirtualmemory", "ntprotectvirtualmemory",
      "ntcreatefile",      "ntreadfile",             "ntwritefile",             "ntclose",
      "regopenkeyexa",     "regqueryvalueexa",       "regsetvalueexa",          "regclosekey",
      "createprocessw",    "openprocess",            "writeprocessmemory",      "createremotethread",
      "findfirstfilew",    "findnextfilew",          "getsysteminfo",           "getcomputernamew",
      "internetopena",     "internetconnecta",       "httpsendrequesta",        "socket",
      "connect",           "send",                   "recv",                    "setwindowshookexa",
      "getasynckeystate",  "cryptencrypt"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens; ++i) {
    if (i < std::size(kNames)) out.emplace_back(kNames[i]);
    else out.push_back("apicall" + std::to_string(i));
  }
  return out;
}

Dataset synthesize_markov_corpus(const SynthOptions& options) {
  if (options.class_counts.empty()) throw std::invalid_argument("synth: no classes");
  if (options.tokens < 2) throw std::invalid_argument("synth: need at least 2 call tokens");
  if (options.min_len < 1 || options.max_len < options.min_len) throw std::invalid_argument("synth: bad length range");
  if (options.fanout < 1 || options.fanout > options.tokens) throw std::invalid_argument("synth: bad fanout");
  if (!(options.noise >= 0.0 && options.noise <= 1.0)) throw std::invalid_argument("synth: noise must lie in [0, 1]");

  const auto alphabet = synth_alphabet(options.tokens);
  const std::size_t v = options.tokens;
  std::vector<Sample> samples;
  for (std::size_t c = 0; c < options.class_counts.size(); ++c) {
    std::mt19937_64 chain_rng(derive_seed(options.seed, "chain", c));
    // Row-stochastic transition matrix for this class.
    std::vector<std::vector<double>> transition(v, std::vector<double>(v, options.noise / static_cast<double>(v)));
    std::uniform_real_distribution<double> weight(1.0, 3.0);
    std::vector<std::size_t> states(v);
    for (std::size_t s = 0; s < v; ++s) {
      std::iota(states.begin(), states.end(), std::size_t{0});
      std::shuffle(states.begin(), states.end(), chain_rng);
      std::vector<double> w(options.fanout);
      double total = 0.0;
      for (auto& x : w) total += (x = weight(chain_rng));
      for (std::size_t f = 0; f < options.fanout; ++f)
        transition[s][states[f]] += (1.0 - options.noise) * w[f] / total;
    }

    std::mt19937_64 rng(derive_seed(options.seed, "samples", c));
    std::uniform_int_distribution<std::size_t> length(options.min_len, options.max_len);
    std::uniform_int_distribution<std::size_t> start(0, v - 1);
    for (std::size_t n = 0; n < options.class_counts[c]; ++n) {
      Sample s;
      s.id = "syn-" + std::to_string(c) + "-" + std::to_string(n);
      s.label = "family_" + std::to_string(c);
      const std::size_t len = length(rng);
      std::size_t state = start(rng);
      s.calls.push_back(alphabet[state]);
      for (std::size_t t = 1; t < len; ++t) {
        std::discrete_distribution<std::size_t> next(transition[state].begin(), transition[state].end());
        state = next(rng);
        s.calls.push_back(alphabet[state]);
      }
      samples.push_back(std::move(s));
    }
  }
  return Dataset(std::move(samples), "synthetic-markov");
}

ClassDistribution published_distribution(const std::string& corpus) {
  if (corpus == "catak")
    return {{"Trojan", 1001}, {"Virus", 1001},      {"Adware", 379},  {"Backdoor", 1001},
            {"Downloader", 1001}, {"Worms", 1001}, {"Dropper", 891}, {"Spyware", 832}};
  if (corpus == "oliveira")
    return {{"Trojan", 31979}, {"Virus", 102},      {"Adware", 5444},     {"Backdoor", 135}, {"Downloader", 1948},
            {"Agent", 220},    {"Ransomware", 404}, {"Dropper", 118},     {"Riskware", 216}};
  if (corpus == "virussample")
    return {{"Trojan", 6153}, {"Virus", 2367}, {"Adware", 222}, {"Backdoor", 447}, {"Worms", 441}, {"Agent", 102}};
  if (corpus == "virusshare")
    return {{"Trojan", 8919}, {"Virus", 2490}, {"Adware", 908}, {"Backdoor", 510},
            {"Downloader", 218}, {"Worms", 524}, {"Agent", 165}, {"Ransomware", 115}};
  throw std::invalid_argument("unknown corpus '" + corpus + "'");
}

Dataset dataset_with_distribution(const ClassDistribution& dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto alphabet = synth_alphabet(30);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<std::size_t> length(1, 8);
  std::vector<Sample> samples;
  for (const auto& [name, count] : dist) {
    for (std::size_t n = 0; n < count; ++n) {
      Sample s;
      s.id = name + "-" + std::to_string(n);
      s.label = name;
      const std::size_t len = length(rng);
      for (std::size_t t = 0; t < len; ++t) s.calls.push_back(alphabet[pick(rng)]);
      samples.push_back(std::move(s));
    }
  }
  return Dataset(std::move(samples), "distribution");
}

}  // namespace rtf
