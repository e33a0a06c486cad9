#include "more/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "more/errors.hpp"

namespace more {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !in.eof())
    throw ConfigError("config: bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + text + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    encoder().validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(0.0 < lambda_lo && lambda_lo < lambda_hi && lambda_hi < 1.0))
    throw ConfigError("config: need 0 < lambda_lo < lambda_hi < 1");
  if (tau <= 0.0) throw ConfigError("config: tau must be positive");
  if (kernel_d < 1 || kernel_d % 2 == 0) throw ConfigError("config: kernel_d must be odd");
  if (phi <= 0.0) throw ConfigError("config: phi must be positive");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  const std::size_t l = (image_size / patch_size) * (image_size / patch_size);
  if (effective_k() < 1 || effective_k() > l)
    throw ConfigError("config: k_neighbors out of range");
  if (shapes_min < 1 || shapes_max < shapes_min)
    throw ConfigError("config: bad shapes range");
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  out.precision(17);
  out << "image_size=" << image_size << "\n"
      << "patch_size=" << patch_size << "\n"
      << "embed_dim=" << embed_dim << "\n"
      << "depth=" << depth << "\n"
      << "num_heads=" << num_heads << "\n"
      << "num_classes=" << num_classes << "\n"
      << "k_neighbors=" << k_neighbors << "\n"
      << "use_gcr=" << (use_gcr ? 1 : 0) << "\n"
      << "lambda_lo=" << lambda_lo << "\n"
      << "lambda_hi=" << lambda_hi << "\n"
      << "bg_threshold=" << bg_threshold << "\n"
      << "tau=" << tau << "\n"
      << "kernel_d=" << kernel_d << "\n"
      << "phi=" << phi << "\n"
      << "alpha=" << alpha << "\n"
      << "beta=" << beta << "\n"
      << "gamma=" << gamma << "\n"
      << "lr=" << lr << "\n"
      << "weight_decay=" << weight_decay << "\n"
      << "batch_size=" << batch_size << "\n"
      << "steps=" << steps << "\n"
      << "warmup_steps=" << warmup_steps << "\n"
      << "checkpoint_every=" << checkpoint_every << "\n"
      << "seg_encoder_grad=" << (seg_encoder_grad ? 1 : 0) << "\n"
      << "train_samples=" << train_samples << "\n"
      << "val_samples=" << val_samples << "\n"
      << "data_seed=" << data_seed << "\n"
      << "seed=" << seed << "\n"
      << "shapes_min=" << shapes_min << "\n"
      << "shapes_max=" << shapes_max << "\n"
      << "out_dir=" << out_dir << "\n";
  return out.str();
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>>
      setters = {
          {"image_size", [&](auto& k, auto& v) { cfg.image_size = parse_num<std::size_t>(k, v); }},
          {"patch_size", [&](auto& k, auto& v) { cfg.patch_size = parse_num<std::size_t>(k, v); }},
          {"embed_dim", [&](auto& k, auto& v) { cfg.embed_dim = parse_num<std::size_t>(k, v); }},
          {"depth", [&](auto& k, auto& v) { cfg.depth = parse_num<std::size_t>(k, v); }},
          {"num_heads", [&](auto& k, auto& v) { cfg.num_heads = parse_num<std::size_t>(k, v); }},
          {"num_classes", [&](auto& k, auto& v) { cfg.num_classes = parse_num<std::size_t>(k, v); }},
          {"k_neighbors", [&](auto& k, auto& v) { cfg.k_neighbors = parse_num<std::size_t>(k, v); }},
          {"use_gcr", [&](auto& k, auto& v) { cfg.use_gcr = parse_bool(k, v); }},
          {"lambda_lo", [&](auto& k, auto& v) { cfg.lambda_lo = parse_num<double>(k, v); }},
          {"lambda_hi", [&](auto& k, auto& v) { cfg.lambda_hi = parse_num<double>(k, v); }},
          {"bg_threshold", [&](auto& k, auto& v) { cfg.bg_threshold = parse_num<double>(k, v); }},
          {"tau", [&](auto& k, auto& v) { cfg.tau = parse_num<double>(k, v); }},
          {"kernel_d", [&](auto& k, auto& v) { cfg.kernel_d = parse_num<int>(k, v); }},
          {"phi", [&](auto& k, auto& v) { cfg.phi = parse_num<double>(k, v); }},
          {"alpha", [&](auto& k, auto& v) { cfg.alpha = parse_num<double>(k, v); }},
          {"beta", [&](auto& k, auto& v) { cfg.beta = parse_num<double>(k, v); }},
          {"gamma", [&](auto& k, auto& v) { cfg.gamma = parse_num<double>(k, v); }},
          {"lr", [&](auto& k, auto& v) { cfg.lr = parse_num<double>(k, v); }},
          {"weight_decay", [&](auto& k, auto& v) { cfg.weight_decay = parse_num<double>(k, v); }},
          {"batch_size", [&](auto& k, auto& v) { cfg.batch_size = parse_num<std::size_t>(k, v); }},
          {"steps", [&](auto& k, auto& v) { cfg.steps = parse_num<std::size_t>(k, v); }},
          {"warmup_steps", [&](auto& k, auto& v) { cfg.warmup_steps = parse_num<std::size_t>(k, v); }},
          {"checkpoint_every", [&](auto& k, auto& v) { cfg.checkpoint_every = parse_num<std::size_t>(k, v); }},
          {"seg_encoder_grad", [&](auto& k, auto& v) { cfg.seg_encoder_grad = parse_bool(k, v); }},
          {"train_samples", [&](auto& k, auto& v) { cfg.train_samples = parse_num<std::size_t>(k, v); }},
          {"val_samples", [&](auto& k, auto& v) { cfg.val_samples = parse_num<std::size_t>(k, v); }},
          {"data_seed", [&](auto& k, auto& v) { cfg.data_seed = parse_num<std::uint64_t>(k, v); }},
          {"seed", [&](auto& k, auto& v) { cfg.seed = parse_num<std::uint64_t>(k, v); }},
          {"shapes_min", [&](auto& k, auto& v) { cfg.shapes_min = parse_num<std::size_t>(k, v); }},
          {"shapes_max", [&](auto& k, auto& v) { cfg.shapes_max = parse_num<std::size_t>(k, v); }},
          {"out_dir", [&](auto&, auto& v) { cfg.out_dir = v; }},
      };
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end())
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

}  // namespace more
