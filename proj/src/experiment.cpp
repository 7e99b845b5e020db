#include "mvseg/experiment.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mvseg {

void ToyExperimentConfig::validate() const {
  net.validate();
  train.validate();
  if (data.num_classes != net.num_classes) throw ConfigError("data and network class counts differ");
  const std::size_t div = std::size_t{1} << net.levels();
  if (data.width % div != 0 || data.height % div != 0) {
    throw ConfigError("image size must be divisible by 2^levels");
  }
  if (train_sequences == 0 || test_sequences == 0) throw ConfigError("need train and test sequences");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  std::string rest;
  if (!(in >> v) || (in >> rest)) throw ConfigError("bad value for " + key + ": \"" + text + "\"");
  return v;
}

}  // namespace

ToyExperimentConfig load_toy_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ToyExperimentConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto sz = [](std::size_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_value<std::size_t>(k, v); };
  };
  auto u64 = [](std::uint64_t& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_value<std::uint64_t>(k, v); };
  };
  auto dbl = [](double& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_value<double>(k, v); };
  };
  const std::map<std::string, Setter> setters{
      {"classes",
       [&](const std::string& k, const std::string& v) {
         c.data.num_classes = c.net.num_classes = parse_value<std::size_t>(k, v);
       }},
      {"width", sz(c.data.width)},
      {"height", sz(c.data.height)},
      {"neighbors", sz(c.data.neighbors)},
      {"rgb_noise", dbl(c.data.rgb_noise)},
      {"max_travel", dbl(c.data.max_travel)},
      {"widths",
       [&](const std::string& k, const std::string& v) {
         std::istringstream ws(v);
         c.net.widths.clear();
         std::size_t w;
         while (ws >> w) c.net.widths.push_back(w);
         if (!ws.eof() || c.net.widths.empty()) throw ConfigError("bad value for " + k);
       }},
      {"kernel", sz(c.net.kernel)},
      {"learning_rate", dbl(c.train.learning_rate)},
      {"momentum", dbl(c.train.momentum)},
      {"weight_decay", dbl(c.train.weight_decay)},
      {"epochs", sz(c.train.epochs)},
      {"curriculum_step", sz(c.train.curriculum_step)},
      {"curriculum_every", sz(c.train.curriculum_every)},
      {"sequences_per_batch", sz(c.train.sequences_per_batch)},
      {"neighbors_per_sequence", sz(c.train.neighbors_per_sequence)},
      {"train_sequences", sz(c.train_sequences)},
      {"test_sequences", sz(c.test_sequences)},
      {"eval_frames", sz(c.eval_frames)},
      {"data_seed", u64(c.data_seed)},
      {"test_seed", u64(c.test_seed)},
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + "unknown key \"" + key + "\"");
    try {
      it->second(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.validate();
  return c;
}

void save_toy_config(const std::string& path, const ToyExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "classes = " << c.data.num_classes << "\nwidth = " << c.data.width
      << "\nheight = " << c.data.height << "\nneighbors = " << c.data.neighbors
      << "\nrgb_noise = " << c.data.rgb_noise << "\nmax_travel = " << c.data.max_travel
      << "\nwidths =";
  for (std::size_t w : c.net.widths) out << ' ' << w;
  out << "\nkernel = " << c.net.kernel << "\nlearning_rate = " << c.train.learning_rate
      << "\nmomentum = " << c.train.momentum << "\nweight_decay = " << c.train.weight_decay
      << "\nepochs = " << c.train.epochs << "\ncurriculum_step = " << c.train.curriculum_step
      << "\ncurriculum_every = " << c.train.curriculum_every
      << "\nsequences_per_batch = " << c.train.sequences_per_batch
      << "\nneighbors_per_sequence = " << c.train.neighbors_per_sequence
      << "\ntrain_sequences = " << c.train_sequences << "\ntest_sequences = " << c.test_sequences
      << "\neval_frames = " << c.eval_frames << "\ndata_seed = " << c.data_seed
      << "\ntest_seed = " << c.test_seed << '\n';
  if (!out) throw IoError("failed writing " + path);
}

ToyRunResult run_toy_experiment(const ToyExperimentConfig& config, ConsistencyMode mode,
                                std::uint64_t seed) {
  config.validate();
  const auto train_set = make_toy_sequences(config.train_sequences, config.data, config.data_seed + seed);
  const auto test_set = make_toy_sequences(config.test_sequences, config.data, config.test_seed + seed);
  std::mt19937_64 init_rng(seed);
  TrainConfig tc = config.train;
  tc.mode = mode;
  tc.seed = seed;
  ToyRunResult r{ToyNetParams::he_init(config.net, init_rng), {},
                 {ConfusionMatrix(config.net.num_classes), ConfusionMatrix(config.net.num_classes)}};
  r.params = train(std::move(r.params), train_set, tc,
                   [&](const IterationRecord& rec) { r.log.push_back(rec); });
  r.evaluation = evaluate_fused(r.params, test_set, config.eval_frames);
  return r;
}

}  // namespace mvseg
