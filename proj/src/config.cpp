#include "c4net/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "c4net/errors.hpp"

namespace c4net {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + value + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("config: " + key + " needs at least one value");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"encoder_channels",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto ch = parse_ints(k, v);
         if (ch.size() != kLevels) throw ConfigError("config: encoder_channels needs exactly 5 values");
         std::copy(ch.begin(), ch.end(), c.model.encoder_channels.begin());
       }},
      {"input_size", [](RunConfig& c, auto& k, auto& v) { c.model.input_size = parse_number<int>(k, v); }},
      {"cf", [](RunConfig& c, auto& k, auto& v) { c.model.cf = parse_number<int>(k, v); }},
      {"pyramid_sizes", [](RunConfig& c, auto& k, auto& v) { c.model.pyramid_sizes = parse_ints(k, v); }},
      {"attention_reduction",
       [](RunConfig& c, auto& k, auto& v) { c.model.attention_reduction = parse_number<int>(k, v); }},
      {"decoder_mode",
       [](RunConfig& c, auto&, auto& v) {
         try {
           c.model.decoder_mode = parse_decoder_mode(v);
         } catch (const ContractError& e) {
           throw ConfigError(std::string("config: ") + e.what());
         }
       }},
      {"use_ccm", [](RunConfig& c, auto& k, auto& v) { c.model.use_ccm = parse_bool(k, v); }},
      {"use_cem", [](RunConfig& c, auto& k, auto& v) { c.model.use_cem = parse_bool(k, v); }},
      {"use_psm", [](RunConfig& c, auto& k, auto& v) { c.model.use_psm = parse_bool(k, v); }},
      {"encoder_residual", [](RunConfig& c, auto& k, auto& v) { c.model.encoder_residual = parse_bool(k, v); }},
      {"lambda_tilde", [](RunConfig& c, auto& k, auto& v) { c.loss.lambda_tilde = parse_number<double>(k, v); }},
      {"window_k", [](RunConfig& c, auto& k, auto& v) { c.loss.window_k = parse_number<int>(k, v); }},
      {"gamma", [](RunConfig& c, auto& k, auto& v) { c.loss.gamma = parse_number<double>(k, v); }},
      {"eps", [](RunConfig& c, auto& k, auto& v) { c.loss.eps = parse_number<double>(k, v); }},
      {"use_el", [](RunConfig& c, auto& k, auto& v) { c.loss.use_el = parse_bool(k, v); }},
      {"use_wiou", [](RunConfig& c, auto& k, auto& v) { c.loss.use_wiou = parse_bool(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_number<int>(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_number<int>(k, v); }},
      {"momentum", [](RunConfig& c, auto& k, auto& v) { c.train.momentum = parse_number<double>(k, v); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = parse_number<double>(k, v); }},
      {"lr_head", [](RunConfig& c, auto& k, auto& v) { c.train.lr_head = parse_number<double>(k, v); }},
      {"lr_encoder", [](RunConfig& c, auto& k, auto& v) { c.train.lr_encoder = parse_number<double>(k, v); }},
      {"warmup_fraction",
       [](RunConfig& c, auto& k, auto& v) { c.train.warmup_fraction = parse_number<double>(k, v); }},
      {"crop", [](RunConfig& c, auto& k, auto& v) { c.train.crop = parse_bool(k, v); }},
      {"flip", [](RunConfig& c, auto& k, auto& v) { c.train.flip = parse_bool(k, v); }},
      {"min_crop", [](RunConfig& c, auto& k, auto& v) { c.train.min_crop = parse_number<double>(k, v); }},
      {"val_fraction", [](RunConfig& c, auto& k, auto& v) { c.train.val_fraction = parse_number<double>(k, v); }},
  };
  return table;
}

std::string join(const auto& values) {
  std::string s;
  for (const auto& v : values) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

const char* boolean(bool b) { return b ? "true" : "false"; }

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    it->second(cfg, key, value);
  }
  try {
    cfg.model.validate();
    cfg.loss.validate();
    cfg.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& c) {
  std::ostringstream out;
  out << "encoder_channels = " << join(c.model.encoder_channels) << '\n'
      << "input_size = " << c.model.input_size << '\n'
      << "cf = " << c.model.cf << '\n'
      << "pyramid_sizes = " << join(c.model.pyramid_sizes) << '\n'
      << "attention_reduction = " << c.model.attention_reduction << '\n'
      << "decoder_mode = " << to_string(c.model.decoder_mode) << '\n'
      << "use_ccm = " << boolean(c.model.use_ccm) << '\n'
      << "use_cem = " << boolean(c.model.use_cem) << '\n'
      << "use_psm = " << boolean(c.model.use_psm) << '\n'
      << "encoder_residual = " << boolean(c.model.encoder_residual) << '\n'
      << "lambda_tilde = " << num(c.loss.lambda_tilde) << '\n'
      << "window_k = " << c.loss.window_k << '\n'
      << "gamma = " << num(c.loss.gamma) << '\n'
      << "eps = " << num(c.loss.eps) << '\n'
      << "use_el = " << boolean(c.loss.use_el) << '\n'
      << "use_wiou = " << boolean(c.loss.use_wiou) << '\n'
      << "epochs = " << c.train.epochs << '\n'
      << "batch_size = " << c.train.batch_size << '\n'
      << "momentum = " << num(c.train.momentum) << '\n'
      << "weight_decay = " << num(c.train.weight_decay) << '\n'
      << "lr_head = " << num(c.train.lr_head) << '\n'
      << "lr_encoder = " << num(c.train.lr_encoder) << '\n'
      << "warmup_fraction = " << num(c.train.warmup_fraction) << '\n'
      << "crop = " << boolean(c.train.crop) << '\n'
      << "flip = " << boolean(c.train.flip) << '\n'
      << "min_crop = " << num(c.train.min_crop) << '\n'
      << "val_fraction = " << num(c.train.val_fraction) << '\n';
  return out.str();
}

}  // namespace c4net
