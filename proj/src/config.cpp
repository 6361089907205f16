#include "affect/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace affect {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::string_view(" \t\r").find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  while (!s.empty() && std::string_view(" \t").find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  return s;
}

template <typename T>
T parse_as(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("bad value '" + std::string(value) + "' for key " + std::string(key));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ConfigError("non-finite value for key " + std::string(key));
  }
  return out;
}

std::size_t parse_positive(std::string_view key, std::string_view value) {
  const auto v = parse_as<std::size_t>(key, value);
  if (v == 0) throw ConfigError(std::string(key) + " must be positive");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad boolean '" + std::string(value) + "' for key " + std::string(key));
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
  bool model_train;
};

#define AFFECT_SIZE_KEY(name, field)                                                   \
  Key{name, [](RunConfig& c, std::string_view v) { c.field = parse_positive(name, v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }, true}
#define AFFECT_DOUBLE_KEY(name, field)                                                   \
  Key{name, [](RunConfig& c, std::string_view v) { c.field = parse_as<double>(name, v); }, \
      [](const RunConfig& c) { return format_double(c.field); }, true}
#define AFFECT_PATH_KEY(name, field) \
  Key{name, [](RunConfig& c, std::string_view v) { c.field = std::string(v); }, [](const RunConfig& c) { return c.field; }, false}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"task", [](RunConfig& c, std::string_view v) { c.model.task = parse_task(v); },
          [](const RunConfig& c) { return std::string(task_name(c.model.task)); }, true},
      AFFECT_SIZE_KEY("feat_dim", model.feat_dim),
      AFFECT_SIZE_KEY("d_model", model.d_model),
      AFFECT_SIZE_KEY("d_ff", model.d_ff),
      AFFECT_SIZE_KEY("n_layers", model.n_layers),
      AFFECT_SIZE_KEY("n_heads", model.n_heads),
      AFFECT_DOUBLE_KEY("dropout", model.dropout),
      AFFECT_SIZE_KEY("head_hidden", model.head_hidden),
      AFFECT_SIZE_KEY("seg_len", model.seg_len),
      AFFECT_SIZE_KEY("epochs", train.epochs),
      AFFECT_SIZE_KEY("batch_size", train.batch_size),
      AFFECT_DOUBLE_KEY("lr", train.lr),
      AFFECT_DOUBLE_KEY("weight_decay", train.weight_decay),
      AFFECT_DOUBLE_KEY("beta1", train.beta1),
      AFFECT_DOUBLE_KEY("beta2", train.beta2),
      AFFECT_DOUBLE_KEY("adam_eps", train.adam_eps),
      Key{"seed",
          [](RunConfig& c, std::string_view v) {
            if (v.empty()) {
              c.seed_set = false;
              c.train.seed = 0;
            } else {
              c.train.seed = parse_as<std::uint64_t>("seed", v);
              c.seed_set = true;
            }
          },
          [](const RunConfig& c) { return c.seed_set ? std::to_string(c.train.seed) : std::string(); }, true},
      Key{"weighted_loss", [](RunConfig& c, std::string_view v) { c.train.weighted_loss = parse_bool("weighted_loss", v); },
          [](const RunConfig& c) { return std::string(c.train.weighted_loss ? "true" : "false"); }, true},
      Key{"va_loss",
          [](RunConfig& c, std::string_view v) {
            if (v == "ccc") c.train.va_loss = VaLoss::Ccc;
            else if (v == "mse") c.train.va_loss = VaLoss::Mse;
            else throw ConfigError("va_loss must be ccc or mse, got '" + std::string(v) + "'");
          },
          [](const RunConfig& c) { return std::string(c.train.va_loss == VaLoss::Ccc ? "ccc" : "mse"); }, true},
      AFFECT_DOUBLE_KEY("grad_clip", train.grad_clip),
      AFFECT_DOUBLE_KEY("au_threshold", train.au_threshold),
      Key{"use_synthetic", [](RunConfig& c, std::string_view v) { c.use_synthetic = parse_bool("use_synthetic", v); },
          [](const RunConfig& c) { return std::string(c.use_synthetic ? "true" : "false"); }, false},
      AFFECT_PATH_KEY("manifest", manifest),
      AFFECT_PATH_KEY("val_manifest", val_manifest),
      AFFECT_PATH_KEY("synthetic_manifest", synthetic_manifest),
      AFFECT_PATH_KEY("out", out),
  };
  return table;
}

#undef AFFECT_SIZE_KEY
#undef AFFECT_DOUBLE_KEY
#undef AFFECT_PATH_KEY

template <typename Line>
void for_each_line(std::string_view text, Line&& on_line) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) on_line(line, line_no);
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& k : keys()) n.push_back(k.name);
    return n;
  }();
  return names;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::parse(std::string_view text, const std::string& what) {
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(what + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(what + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
}

std::string RunConfig::format() const {
  std::ostringstream os;
  for (const auto& k : keys()) os << k.name << " = " << k.get(*this) << '\n';
  return os.str();
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

std::string format_model_train(const ModelConfig& model, const TrainConfig& train) {
  RunConfig c;
  c.model = model;
  c.train = train;
  c.seed_set = true;
  std::ostringstream os;
  for (const auto& k : keys())
    if (k.model_train) os << k.name << " = " << k.get(c) << '\n';
  return os.str();
}

void parse_model_train(std::string_view text, ModelConfig& model, TrainConfig& train) {
  RunConfig c;
  for_each_line(text, [&](std::string_view line, std::size_t) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("checkpoint config: malformed line");
    const auto key = trim(line.substr(0, eq));
    bool known = false;
    for (const auto& k : keys()) known = known || (k.model_train && k.name == key);
    if (!known) throw FormatError("checkpoint config: unexpected key '" + std::string(key) + "'");
    c.set(key, trim(line.substr(eq + 1)));
  });
  model = c.model;
  train = c.train;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.parse(ss.str(), path.string());
  return c;
}

}  // namespace affect
