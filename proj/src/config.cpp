#include "cvos/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace cvos {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

double parse_double(const std::string& s) {
  if (s.empty()) throw ConfigError("expected a number, got ''");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected on/off, got '" + s + "'");
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Ref>
Key int_key(std::string name, Ref ref, long long min) {
  return Key{name,
             [ref, min, name](RunConfig& c, const std::string& v) {
               const long long x = parse_int(v);
               if (x < min || x > std::numeric_limits<int>::max()) {
                 throw ConfigError(name + " must be an integer >= " + std::to_string(min));
               }
               ref(c) = static_cast<int>(x);
             },
             [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <class Ref>
Key double_key(std::string name, Ref ref, double min, bool exclusive) {
  return Key{name,
             [ref, min, exclusive, name](RunConfig& c, const std::string& v) {
               const double x = parse_double(v);
               if (exclusive ? !(x > min) : !(x >= min)) {
                 throw ConfigError(name + " must be " + (exclusive ? "> " : ">= ") + fmt_double(min));
               }
               ref(c) = x;
             },
             [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); }};
}

template <class Ref>
Key bool_key(std::string name, Ref ref) {
  return Key{name, [ref](RunConfig& c, const std::string& v) { ref(c) = parse_bool(v); },
             [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "on" : "off"); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

std::vector<Key> build_keys() {
  std::vector<Key> k;
  k.push_back(Key{"seed",
                  [](RunConfig& c, const std::string& v) {
                    std::uint64_t x = 0;
                    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                    if (ec != std::errc() || ptr != v.data() + v.size()) {
                      throw ConfigError("seed must be a non-negative integer");
                    }
                    c.seed = x;
                  },
                  [](const RunConfig& c) { return std::to_string(c.seed); }});
  k.push_back(int_key("height", FIELD(height), 32));
  k.push_back(int_key("width", FIELD(width), 32));
  k.push_back(int_key("n_val", FIELD(n_val), 0));
  k.push_back(int_key("workers", FIELD(workers), 1));

  k.push_back(int_key("enc1", FIELD(hyper.enc1), 1));
  k.push_back(int_key("enc2", FIELD(hyper.enc2), 1));
  k.push_back(int_key("key_dim", FIELD(hyper.key_dim), 1));
  k.push_back(int_key("value_dim", FIELD(hyper.value_dim), 1));
  k.push_back(int_key("dec_dim", FIELD(hyper.dec_dim), 1));

  k.push_back(int_key("epochs", FIELD(train.epochs), 0));
  k.push_back(int_key("batch_size", FIELD(train.batch_size), 1));
  k.push_back(double_key("lr", FIELD(train.lr), 0.0, true));
  k.push_back(double_key("beta1", FIELD(train.beta1), 0.0, false));
  k.push_back(double_key("beta2", FIELD(train.beta2), 0.0, false));
  k.push_back(double_key("adam_eps", FIELD(train.adam_eps), 0.0, true));
  k.push_back(int_key("frames_per_clip", FIELD(train.frames_per_clip), 2));
  k.push_back(int_key("interval_step", FIELD(train.interval_step), 1));
  k.push_back(int_key("interval_epoch_period", FIELD(train.interval_epoch_period), 1));
  k.push_back(double_key("forward_weight", FIELD(train.forward_weight), 0.0, false));
  k.push_back(double_key("cycle_weight", FIELD(train.cycle_weight), 0.0, false));
  k.push_back(Key{"train_strategy",
                  [](RunConfig& c, const std::string& v) {
                    try {
                      c.train.strategy = parse_strategy(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                    }
                  },
                  [](const RunConfig& c) { return to_string(c.train.strategy); }});
  k.push_back(bool_key("augment", FIELD(train.augment)));
  k.push_back(int_key("checkpoint_every", FIELD(train.checkpoint_every), 0));

  k.push_back(double_key("gamma", FIELD(loss.gamma), 0.0, false));
  k.push_back(double_key("bootstrap_frac", FIELD(loss.bootstrap_frac), 0.0, true));
  k.push_back(double_key("lambda", FIELD(correction.lambda), 0.0, false));
  k.push_back(double_key("loss_eps", FIELD(loss.eps), 0.0, true));

  k.push_back(double_key("alpha", FIELD(correction.alpha), 0.0, false));
  k.push_back(int_key("n_iters", FIELD(correction.n_iters), 0));
  k.push_back(int_key("every_k", FIELD(correction.every_k), 1));
  k.push_back(Key{"clamp",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "unit_interval") {
                      c.correction.clamp = ClampMode::unit_interval;
                    } else if (v == "none") {
                      c.correction.clamp = ClampMode::none;
                    } else {
                      throw ConfigError("clamp must be unit_interval or none");
                    }
                  },
                  [](const RunConfig& c) {
                    return std::string(c.correction.clamp == ClampMode::none ? "none" : "unit_interval");
                  }});

  k.push_back(Key{"strategy",
                  [](RunConfig& c, const std::string& v) {
                    try {
                      c.inference.strategy = parse_strategy(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                    }
                  },
                  [](const RunConfig& c) { return to_string(c.inference.strategy); }});
  k.push_back(int_key("mem_stride", FIELD(inference.mem_stride), 1));
  k.push_back(bool_key("gc", FIELD(inference.gc)));

  k.push_back(int_key("m_iters", FIELD(erf.m_iters), 1));
  k.push_back(Key{"erf_alpha",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "auto") {
                      c.erf.alpha.reset();
                      return;
                    }
                    const double x = parse_double(v);
                    if (!(x >= 0.0)) throw ConfigError("erf_alpha must be >= 0 or auto");
                    c.erf.alpha = x;
                  },
                  [](const RunConfig& c) { return c.erf.alpha ? fmt_double(*c.erf.alpha) : std::string("auto"); }});
  k.push_back(Key{"erf_target",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "first") {
                      c.erf.target_frame.reset();
                      return;
                    }
                    const long long x = parse_int(v);
                    if (x < 1) throw ConfigError("erf_target must be 'first' or a frame number >= 1");
                    c.erf.target_frame = static_cast<int>(x - 1);
                  },
                  [](const RunConfig& c) {
                    return c.erf.target_frame ? std::to_string(*c.erf.target_frame + 1) : std::string("first");
                  }});

  k.push_back(double_key("epsilon", FIELD(attack.epsilon), 0.0, true));
  k.push_back(int_key("mi_iters", FIELD(attack.mi_iters), 1));
  k.push_back(double_key("mi_decay", FIELD(attack.mi_decay), 0.0, false));
  k.push_back(Key{"attack_mode",
                  [](RunConfig& c, const std::string& v) {
                    try {
                      c.attack.mode = parse_attack_mode(v);
                    } catch (const std::invalid_argument& e) {
                      throw ConfigError(e.what());
                    }
                  },
                  [](const RunConfig& c) { return to_string(c.attack.mode); }});
  k.push_back(int_key("attack_horizon", FIELD(attack.horizon), 1));

  k.push_back(int_key("n_videos", FIELD(synth.n_videos), 1));
  k.push_back(int_key("frames_per_video", FIELD(synth.frames_per_video), 2));
  k.push_back(int_key("min_objects", FIELD(synth.min_objects), 1));
  k.push_back(int_key("n_objects", FIELD(synth.n_objects), 1));
  k.push_back(int_key("min_speed", FIELD(synth.min_speed), 0));
  k.push_back(int_key("max_speed", FIELD(synth.max_speed), 1));
  k.push_back(double_key("occluder_prob", FIELD(synth.occluder_prob), 0.0, false));
  return k;
}

#undef FIELD

const std::vector<Key>& keys() {
  static const std::vector<Key> k = build_keys();
  return k;
}

const Key* find_key(const std::string& name) {
  for (const Key& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void apply_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.sync();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

}  // namespace

void RunConfig::sync() {
  train.seed = seed;
  synth.seed = seed;
  synth.height = height;
  synth.width = width;
  train.mem_stride = inference.mem_stride;
  loss.lambda = correction.lambda;
  inference.correction = correction;
  inference.loss = loss;
}

void RunConfig::validate() const {
  hyper.validate();
  train.validate();
  loss.validate();
  correction.validate();
  inference.validate();
  erf.validate();
  synth.validate();
  if (n_val >= synth.n_videos) throw std::invalid_argument("RunConfig: n_val must be smaller than n_videos");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const Key& k : keys()) n.push_back(k.name);
    return n;
  }();
  return names;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'");
  k->set(cfg, value);
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  apply_text(cfg, text, source);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  RunConfig cfg;
  merge_config_file(cfg, path);
  return cfg;
}

void merge_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_text(cfg, buf.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cvos
