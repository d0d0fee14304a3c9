#include "pseg/train/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "pseg/error.hpp"

namespace pseg::train {

namespace {

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("config " + key + ": cannot parse '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config " + key + ": expected a boolean, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw std::invalid_argument("config " + key + ": empty list entry");
    out.push_back(parse_number<std::size_t>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw std::invalid_argument("config " + key + ": empty list");
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Ordered registry of "section.key" -> field accessors.
using Registry = std::vector<std::pair<std::string, Field>>;

Registry fields(TrainConfig& c) {
  Registry r;
  auto num = [&r](std::string key, auto& ref) {
    using N = std::remove_reference_t<decltype(ref)>;
    r.push_back({key, {[&ref, key](const std::string& t) { ref = parse_number<N>(key, t); },
                       [&ref] {
                         if constexpr (std::is_floating_point_v<N>) return format_double(ref);
                         else return std::to_string(ref);
                       }}});
  };
  auto flag = [&r](std::string key, bool& ref) {
    r.push_back({key, {[&ref, key](const std::string& t) { ref = parse_bool(key, t); },
                       [&ref] { return std::string(ref ? "true" : "false"); }}});
  };
  auto list = [&r](std::string key, std::vector<std::size_t>& ref) {
    r.push_back({key, {[&ref, key](const std::string& t) { ref = parse_list(key, t); },
                       [&ref] { return format_list(ref); }}});
  };

  num("train.lr", c.lr);
  num("train.weight_decay", c.weight_decay);
  num("train.batch_size", c.batch_size);
  num("train.max_epochs", c.max_epochs);
  num("train.early_stop_patience", c.early_stop_patience);
  num("train.seed", c.seed);
  num("train.val_fraction", c.val_fraction);
  flag("train.weighted_sampler", c.weighted_sampler);

  num("loss.alpha", c.loss.alpha);
  num("loss.gamma", c.loss.gamma);
  num("loss.epsilon", c.loss.epsilon);
  num("loss.dice_weight", c.loss.dice_weight);
  num("loss.ptc_weight", c.loss.ptc_weight);
  auto& loss = c.loss;
  r.push_back({"loss.focal_reduction",
               {[&loss](const std::string& t) {
                  if (t == "mean") loss.focal_reduction = losses::FocalReduction::Mean;
                  else if (t == "sum") loss.focal_reduction = losses::FocalReduction::Sum;
                  else throw std::invalid_argument("config loss.focal_reduction: expected mean or sum");
                },
                [&loss] { return std::string(loss.focal_reduction == losses::FocalReduction::Mean ? "mean" : "sum"); }}});
  r.push_back({"loss.dice_reduction",
               {[&loss](const std::string& t) {
                  if (t == "per_channel") loss.dice_reduction = losses::DiceReduction::PerChannel;
                  else if (t == "global") loss.dice_reduction = losses::DiceReduction::Global;
                  else throw std::invalid_argument("config loss.dice_reduction: expected per_channel or global");
                },
                [&loss] {
                  return std::string(loss.dice_reduction == losses::DiceReduction::PerChannel ? "per_channel" : "global");
                }}});

  num("ptc.embed_dim", c.ptc.embed_dim);
  num("ptc.hidden1", c.ptc.hidden1);
  num("ptc.hidden2", c.ptc.hidden2);
  num("ptc.stage1_kernel", c.ptc.stage1_kernel);
  num("ptc.stage1_stride", c.ptc.stage1_stride);
  num("ptc.stage1_padding", c.ptc.stage1_padding);
  num("ptc.stage2_kernel", c.ptc.stage2_kernel);
  num("ptc.stage2_stride", c.ptc.stage2_stride);
  num("ptc.stage2_padding", c.ptc.stage2_padding);

  list("segnet.encoder_widths", c.segnet.encoder_widths);
  list("segnet.decoder_widths", c.segnet.decoder_widths);
  num("segnet.scse_reduction", c.segnet.scse_reduction);

  auto& a = c.augment;
  num("augment.hflip", a.hflip);
  num("augment.vflip", a.vflip);
  num("augment.rot90", a.rot90);
  num("augment.shift_scale", a.shift_scale);
  num("augment.shift_limit", a.shift_limit);
  num("augment.scale_limit", a.scale_limit);
  num("augment.rgb_shift", a.rgb_shift);
  num("augment.rgb_shift_limit", a.rgb_shift_limit);
  num("augment.hsv", a.hsv);
  num("augment.hue_shift_limit", a.hue_shift_limit);
  num("augment.sat_shift_limit", a.sat_shift_limit);
  num("augment.val_shift_limit", a.val_shift_limit);
  num("augment.brightness_contrast", a.brightness_contrast);
  num("augment.brightness_limit", a.brightness_limit);
  num("augment.contrast_limit", a.contrast_limit);
  num("augment.blur", a.blur);
  num("augment.blur_sigma_max", a.blur_sigma_max);
  num("augment.sharpen", a.sharpen);
  num("augment.jpeg", a.jpeg);
  num("augment.jpeg_quality_min", a.jpeg_quality_min);
  num("augment.jpeg_quality_max", a.jpeg_quality_max);
  auto& enabled = a;
  r.push_back({"augment.enabled",
               {[&enabled](const std::string& t) {
                  if (!parse_bool("augment.enabled", t)) enabled = data::AugmentConfig::disabled();
                },
                [] { return std::string("true"); }}});

  auto& src = c.token_source;
  r.push_back({"tokens.source", {[&src](const std::string& t) { src = tokens::TokenSourceSpec::parse(t); },
                                 [&src] { return src.to_string(); }}});

  num("infer.background_threshold", c.infer.background_threshold);
  flag("infer.postprocess", c.infer.postprocess);
  num("infer.se_size", c.infer.se_size);
  return r;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("train.lr must be non-negative");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be non-negative");
  if (batch_size == 0 || max_epochs == 0 || early_stop_patience == 0) {
    throw std::invalid_argument("train.batch_size, max_epochs and early_stop_patience must be positive");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train.val_fraction must lie in [0, 1)");
  if (segnet.input_size != ptc.output_side) throw ShapeError("segnet input size must equal the PTC output side");
  if (ptc.embed_dim != tokens::kEmbedDim) {
    throw ShapeError("ptc.embed_dim " + std::to_string(ptc.embed_dim) + " does not match the token dimension 1280");
  }
  if (segnet.in_channels != ptc.out_channels + 3) throw ShapeError("segnet input must be PTC channels + RGB");
  if (!(infer.background_threshold >= 0.0 && infer.background_threshold < 1.0)) {
    throw std::invalid_argument("infer.background_threshold must lie in [0, 1)");
  }
  if (infer.se_size % 2 == 0) throw std::invalid_argument("infer.se_size must be odd");
  loss.validate();
  ptc.validate();
  segnet.validate();
  augment.validate();
}

TrainConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  TrainConfig c;
  const Registry reg = fields(c);
  std::map<std::string, const Field*> by_key;
  for (const auto& [k, f] : reg) by_key[k] = &f;

  // augment.enabled=false resets the whole section, so it goes first.
  if (auto e = tree.get_optional<std::string>("augment.enabled")) by_key.at("augment.enabled")->set(*e);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw std::invalid_argument("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = by_key.find(full);
      if (it == by_key.end()) throw std::invalid_argument("config: unknown key " + full);
      if (full != "augment.enabled") it->second->set(value.data());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& config) {
  TrainConfig copy = config;
  std::string out, current;
  for (const auto& [key, field] : fields(copy)) {
    if (key == "augment.enabled") continue;
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      out += (current.empty() ? "[" : "\n[") + section + "]\n";
      current = section;
    }
    out += key.substr(dot + 1) + " = " + field.get() + "\n";
  }
  return out;
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << format_config(config);
  if (!out) throw IoError("failed writing config " + path.string());
}

}  // namespace pseg::train
