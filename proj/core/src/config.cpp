#include "mlatmi/config.hpp"

#include <set>
#include <sstream>

#include <json.hpp>

#include "mlatmi/io.hpp"

namespace mlatmi {

using json = nlohmann::json;

namespace {

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// Field access with the JSON path in every error message.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  Node at(const char* key) const {
    if (!j_.is_object()) throw ConfigError("field '" + path_ + "' must be an object");
    if (!j_.contains(key)) throw ConfigError("missing required field '" + child(key) + "'");
    return {j_.at(key), child(key)};
  }

  Node operator[](std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }
  std::size_t size() const { return j_.size(); }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) throw ConfigError("field '" + path_ + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items()) {
      if (!ok.contains(k)) throw ConfigError("unknown field '" + child(k) + "'");
    }
  }

  void expect_array() const {
    if (!j_.is_array()) throw ConfigError("field '" + path_ + "' must be an array");
  }

  double number() const {
    if (!j_.is_number()) throw ConfigError("field '" + path_ + "' must be a number");
    return j_.get<double>();
  }

  double positive() const {
    const double v = number();
    if (!(v > 0.0)) throw ConfigError("field '" + path_ + "' must be positive");
    return v;
  }

  std::uint64_t count() const {
    if (!j_.is_number_integer() || j_.get<long long>() < 0) {
      throw ConfigError("field '" + path_ + "' must be a non-negative integer");
    }
    return j_.get<std::uint64_t>();
  }

  std::string string() const {
    if (!j_.is_string()) throw ConfigError("field '" + path_ + "' must be a string");
    return j_.get<std::string>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) throw ConfigError("field '" + path_ + "' must be a boolean");
    return j_.get<bool>();
  }

  env::Point2 point2() const {
    expect_array();
    if (size() != 2) throw ConfigError("field '" + path_ + "' must be an [x, y] pair");
    return {(*this)[0].number(), (*this)[1].number()};
  }

 private:
  std::string child(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  const json& j_;
  std::string path_;
};

env::Room parse_room(const Node& n) {
  n.expect_object({"shape", "side", "notch", "vertices", "height", "ue_height", "ref_height"});
  const std::string shape = n.has("shape") ? n.at("shape").string() : "polygon";
  env::Room room;
  if (shape == "square") {
    room = env::square_room(n.at("side").positive());
  } else if (shape == "l_shape") {
    room = env::l_shaped_room(n.at("side").positive(), n.at("notch").positive());
  } else if (shape == "polygon") {
    const Node v = n.at("vertices");
    v.expect_array();
    for (std::size_t i = 0; i < v.size(); ++i) room.boundary.push_back(v[i].point2());
  } else {
    throw ConfigError("field '" + n.path() + ".shape' must be square, l_shape or polygon");
  }
  if (n.has("height")) room.height = n.at("height").positive();
  if (n.has("ue_height")) room.ue_height = n.at("ue_height").positive();
  if (n.has("ref_height")) room.ref_height = n.at("ref_height").positive();
  room.validate();
  return room;
}

measure::NoiseModel parse_noise(const Node& n) {
  n.expect_object({"kind", "sigma"});
  measure::NoiseModel noise;
  if (n.has("kind")) noise.kind = measure::parse_noise_kind(n.at("kind").string());
  if (n.has("sigma")) noise.sigma = n.at("sigma").positive();
  return noise;
}

}  // namespace

const env::ReferencePlacement& RunConfig::require_placement() const {
  if (!placement) throw ConfigError("missing required field 'placement'");
  return *placement;
}

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) {
  return CounterRng(master).derive(stage).key();
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config syntax error at " + line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
  const Node root(j, "");
  root.expect_object({"room", "cell_size", "placement", "suite", "rules", "noise", "study_noises", "realizations", "mine",
                      "parents", "output_dir", "seed"});
  RunConfig cfg;
  cfg.room = parse_room(root.at("room"));
  if (root.has("cell_size")) cfg.cell_size = root.at("cell_size").positive();

  if (root.has("rules")) {
    const Node r = root.at("rules");
    r.expect_object({"min_spacing", "min_wall_distance", "min_visible"});
    if (r.has("min_spacing")) cfg.rules.min_spacing = r.at("min_spacing").number();
    if (r.has("min_wall_distance")) cfg.rules.min_wall_distance = r.at("min_wall_distance").number();
    if (r.has("min_visible")) cfg.rules.min_visible = static_cast<int>(r.at("min_visible").count());
  }

  if (root.has("placement")) {
    const Node p = root.at("placement");
    p.expect_object({"id", "sensing_range", "anchors"});
    const Node anchors = p.at("anchors");
    anchors.expect_array();
    std::vector<env::Point2> xy;
    for (std::size_t i = 0; i < anchors.size(); ++i) xy.push_back(anchors[i].point2());
    const double range = p.has("sensing_range") ? p.at("sensing_range").number() : 7.4;
    if (range < 0.0) throw ConfigError("field 'placement.sensing_range' must be non-negative");
    cfg.placement = env::make_placement(cfg.room, p.has("id") ? p.at("id").string() : "placement", xy, range);
  }

  if (root.has("suite")) {
    const Node s = root.at("suite");
    s.expect_object({"file", "count", "num_refs", "seed", "sensing_range", "max_attempts"});
    if (s.has("file")) cfg.suite_file = s.at("file").string();
    if (s.has("count") || s.has("num_refs")) {
      eval::SuiteSpec spec;
      spec.count = s.at("count").count();
      spec.num_refs = s.at("num_refs").count();
      if (s.has("seed")) spec.seed = s.at("seed").count();
      if (s.has("sensing_range")) spec.sensing_range = s.at("sensing_range").number();
      if (s.has("max_attempts")) spec.max_attempts = s.at("max_attempts").count();
      cfg.suite_spec = spec;
    }
    if (!cfg.suite_file && !cfg.suite_spec) throw ConfigError("field 'suite' needs 'file' or 'count' and 'num_refs'");
  }

  if (root.has("noise")) cfg.noise = parse_noise(root.at("noise"));
  cfg.noise.validate();
  if (root.has("study_noises")) {
    const Node list = root.at("study_noises");
    list.expect_array();
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.study_noises.push_back(parse_noise(list[i]));
      cfg.study_noises.back().validate();
    }
  }
  if (cfg.study_noises.empty()) cfg.study_noises.push_back(cfg.noise);
  if (root.has("realizations")) {
    cfg.realizations = root.at("realizations").count();
    if (cfg.realizations < 1) throw ConfigError("field 'realizations' must be at least 1");
  }

  if (root.has("mine")) {
    const Node m = root.at("mine");
    m.expect_object({"preset", "sizes", "epochs", "window", "batch", "lr0", "lr_decay", "lr_period", "replicates",
                     "ema_denominator", "early_stop_std", "early_stop_window", "bn_epsilon"});
    if (m.has("preset")) cfg.model = mine::parse_model_size(m.at("preset").string());
    if (m.has("sizes")) {
      const Node sizes = m.at("sizes");
      sizes.expect_array();
      for (std::size_t i = 0; i < sizes.size(); ++i) cfg.study_sizes.push_back(mine::parse_model_size(sizes[i].string()));
    }
    if (m.has("epochs")) cfg.train.epochs = m.at("epochs").count();
    if (m.has("window")) cfg.train.window = m.at("window").count();
    if (m.has("batch")) cfg.batch = m.at("batch").count();
    if (m.has("lr0")) cfg.train.lr0 = m.at("lr0").positive();
    if (m.has("lr_decay")) cfg.train.lr_decay = m.at("lr_decay").positive();
    if (m.has("lr_period")) cfg.train.lr_period = m.at("lr_period").positive();
    if (m.has("replicates")) cfg.replicates = m.at("replicates").count();
    if (m.has("ema_denominator")) cfg.train.ema_denominator = m.at("ema_denominator").boolean();
    if (m.has("early_stop_std")) cfg.train.early_stop_std = m.at("early_stop_std").positive();
    if (m.has("early_stop_window")) cfg.train.early_stop_window = m.at("early_stop_window").count();
    if (m.has("bn_epsilon")) cfg.bn_epsilon = m.at("bn_epsilon").number();
  }
  if (cfg.study_sizes.empty()) cfg.study_sizes.push_back(cfg.model);
  cfg.train.validate();

  if (root.has("parents")) {
    const Node p = root.at("parents");
    p.expect_array();
    for (std::size_t i = 0; i < p.size(); ++i) cfg.parents.push_back(p[i].string());
  }
  if (root.has("output_dir")) cfg.output_dir = root.at("output_dir").string();
  if (root.has("seed")) cfg.seed = root.at("seed").count();
  cfg.train.seed = stage_seed(cfg.seed, "mine");
  cfg.config_hash = io::fnv1a_hex(j.dump());
  return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(io::read_text_file(path)); }

}  // namespace mlatmi
