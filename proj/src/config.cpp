#include "ntljb/config.hpp"

#include <stdexcept>

#include "ntljb/bytes.hpp"
#include "ntljb/sha256.hpp"

namespace ntljb {

namespace {

using nlohmann::json;

std::string joined(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const char* type_label(const json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "array";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer() || j.is_number_unsigned()) return "integer";
  if (j.is_number()) return "number";
  return "null";
}

// Integer leaves only accept integers (a silently truncated epoch count is
// a bug, not a convenience); float leaves accept any number.
void check_leaf(const json& schema, const json& value,
                const std::string& path) {
  bool ok = false;
  if (schema.is_string())
    ok = value.is_string();
  else if (schema.is_boolean())
    ok = value.is_boolean();
  else if (schema.is_number_integer() || schema.is_number_unsigned())
    ok = value.is_number_integer() || value.is_number_unsigned();
  else if (schema.is_number())
    ok = value.is_number();
  if (!ok)
    throw std::invalid_argument("config key '" + path + "' expects " +
                                type_label(schema) + ", got " +
                                type_label(value));
}

void check_node(const json& schema, const json& value,
                const std::string& path) {
  if (schema.is_object()) {
    if (!value.is_object())
      throw std::invalid_argument("config key '" + path +
                                  "' expects an object");
    for (const auto& item : value.items()) {
      const std::string sub = joined(path, item.key());
      if (!schema.contains(item.key()))
        throw std::invalid_argument("unknown config key '" + sub + "'");
      check_node(schema.at(item.key()), item.value(), sub);
    }
    return;
  }
  if (schema.is_array()) {
    if (!value.is_array())
      throw std::invalid_argument("config key '" + path +
                                  "' expects an array");
    for (const json& elem : value) check_leaf(schema.front(), elem, path);
    return;
  }
  check_leaf(schema, value, path);
}

json merge_defaults(const json& schema, const json& doc) {
  if (!schema.is_object()) return doc;
  json out = schema;
  for (const auto& item : doc.items())
    out[item.key()] = merge_defaults(schema.at(item.key()), item.value());
  return out;
}

}  // namespace

json RunConfig::default_document() {
  return json{
      {"seed", 1},
      {"data_root", ""},
      {"output_root", "runs"},
      {"data", {{"pair", "digits_small"}}},
      {"victim",
       {{"method", "ntl"},
        {"widths", {12, 24, 48}},
        {"style_mix_layer", 8},
        {"epochs", 10},
        {"batch_size", 64},
        {"lr", 1e-3},
        {"lambda_kl", 1.0},
        {"kl_clamp", 2.0},
        {"lambda_mmd", 0.25},
        {"mmd_clamp", 1.0},
        {"label_smoothing", 0.1},
        {"style_mix_weight", 0.5},
        {"checkpoint", "victim.ckpt"}}},
      {"attack",
       {{"mode", "jailntl"},
        {"epochs", 2},
        {"batch_size", 5},
        {"authorized_fraction", 0.01},
        {"lambda_cs", 10.0},
        {"lambda_cf", 0.01},
        {"lambda_ba", 0.01},
        {"gen_width", 12},
        {"residual_blocks", 2},
        {"disc_width", 12},
        {"squash_scale", 0.95},
        {"gen_lr", 2e-4},
        {"disc_lr", 2e-4},
        {"gan_form", "log_form"},
        {"zo_probes", 8},
        {"zo_step", 0.05},
        {"zo_scheme", "random_spherical"},
        {"soft_counts", false},
        {"oracle_mode", "logits"},
        {"checkpoint", "disguiser.ckpt"}}},
      {"finetune",
       {{"mode", "transntl"},
        {"lambda_sd", 1.0},
        {"epochs", 20},
        {"batch_size", 16},
        {"lr", 1e-4},
        {"authorized_fraction", 0.01}}},
      {"diagnostics", {{"log_density", false}}},
      {"sweep",
       {{"lambda_cf", {0.5, 0.1, 0.05, 0.01, 0.005, 0.001, 0.0001}},
        {"lambda_ba", {0.01}}}}};
}

RunConfig::RunConfig() : doc_(default_document()) {}

RunConfig RunConfig::from_document(const json& doc) {
  const json schema = default_document();
  check_node(schema, doc, "");
  return RunConfig(merge_defaults(schema, doc));
}

RunConfig RunConfig::load_file(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path + ": " + e.what());
  }
  return from_document(doc);
}

void RunConfig::set_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like section.key=value: " +
                                assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  const json schema_root = default_document();
  const json* schema = &schema_root;
  json* node = &doc_;
  std::string path;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    path = joined(path, parts[i]);
    if (!schema->is_object() || !schema->contains(parts[i]))
      throw std::invalid_argument("unknown config key '" + path + "'");
    schema = &schema->at(parts[i]);
    node = &(*node)[parts[i]];
  }
  if (schema->is_object())
    throw std::invalid_argument("config key '" + path +
                                "' is a section, not a value");

  json value;
  if (schema->is_string()) {
    value = text;
  } else {
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      throw std::invalid_argument("cannot parse override value '" + text +
                                  "' for key '" + path + "'");
    }
  }
  check_node(*schema, value, path);
  *node = value;
}

std::string RunConfig::digest() const {
  // json's object storage is key-sorted and dump() emits no whitespace, so
  // this serialization is canonical for a given document.
  return Sha256::hex(doc_.dump());
}

std::uint64_t RunConfig::seed() const {
  return doc_.at("seed").get<std::uint64_t>();
}

std::string RunConfig::data_root() const {
  return doc_.at("data_root").get<std::string>();
}

std::string RunConfig::output_root() const {
  return doc_.at("output_root").get<std::string>();
}

std::string RunConfig::pair_name() const {
  return doc_.at("data").at("pair").get<std::string>();
}

namespace {

std::string under_root(const std::string& root, const std::string& p) {
  if (!p.empty() && p.front() == '/') return p;
  return root + "/" + p;
}

}  // namespace

std::string RunConfig::victim_checkpoint_path() const {
  return under_root(output_root(),
                    doc_.at("victim").at("checkpoint").get<std::string>());
}

std::string RunConfig::disguiser_checkpoint_path() const {
  return under_root(output_root(),
                    doc_.at("attack").at("checkpoint").get<std::string>());
}

VictimConfig RunConfig::victim_arch(const DomainPair& pair) const {
  const json& v = doc_.at("victim");
  VictimConfig arch;
  arch.widths = v.at("widths").get<std::vector<int>>();
  if (arch.widths.empty())
    throw std::invalid_argument("config key 'victim.widths' must not be empty");
  arch.style_mix_layer = v.at("style_mix_layer").get<int>();
  arch.class_count = pair.class_count;
  arch.resolution = pair.resolution;
  arch.channels = pair.channels;
  return arch;
}

VictimTrainConfig RunConfig::victim_train() const {
  const json& v = doc_.at("victim");
  VictimTrainConfig cfg;
  cfg.method = v.at("method").get<std::string>();
  cfg.epochs = v.at("epochs").get<int>();
  cfg.batch_size = v.at("batch_size").get<int>();
  cfg.lr = v.at("lr").get<double>();
  cfg.lambda_kl = v.at("lambda_kl").get<double>();
  cfg.kl_clamp = v.at("kl_clamp").get<double>();
  cfg.lambda_mmd = v.at("lambda_mmd").get<double>();
  cfg.mmd_clamp = v.at("mmd_clamp").get<double>();
  cfg.label_smoothing = v.at("label_smoothing").get<double>();
  cfg.style_mix_weight = v.at("style_mix_weight").get<double>();
  cfg.seed = seed();
  return cfg;
}

AttackConfig RunConfig::attack() const {
  const json& a = doc_.at("attack");
  AttackConfig cfg;
  cfg.mode = a.at("mode").get<std::string>();
  cfg.epochs = a.at("epochs").get<int>();
  cfg.batch_size = a.at("batch_size").get<int>();
  cfg.authorized_fraction = a.at("authorized_fraction").get<double>();
  cfg.weights.lambda_cs = a.at("lambda_cs").get<double>();
  cfg.weights.lambda_cf = a.at("lambda_cf").get<double>();
  cfg.weights.lambda_ba = a.at("lambda_ba").get<double>();
  cfg.disguiser.width = a.at("gen_width").get<int>();
  cfg.disguiser.residual_blocks = a.at("residual_blocks").get<int>();
  cfg.disguiser.disc_width = a.at("disc_width").get<int>();
  cfg.disguiser.squash_scale = a.at("squash_scale").get<double>();
  cfg.disguiser.gen_lr = a.at("gen_lr").get<double>();
  cfg.disguiser.disc_lr = a.at("disc_lr").get<double>();
  cfg.disguiser.gan_form =
      gan_form_from_name(a.at("gan_form").get<std::string>());
  cfg.zo.probe_count = a.at("zo_probes").get<int>();
  cfg.zo.step = a.at("zo_step").get<double>();
  const std::string scheme = a.at("zo_scheme").get<std::string>();
  if (scheme == "random_spherical")
    cfg.zo.scheme = ZoScheme::random_spherical;
  else if (scheme == "coordinate_subset")
    cfg.zo.scheme = ZoScheme::coordinate_subset;
  else
    throw std::invalid_argument(
        "config key 'attack.zo_scheme' must be random_spherical or "
        "coordinate_subset");
  cfg.soft_counts = a.at("soft_counts").get<bool>();
  cfg.seed = seed();
  return cfg;
}

OracleMode RunConfig::oracle_mode() const {
  const std::string m = doc_.at("attack").at("oracle_mode").get<std::string>();
  if (m == "logits") return OracleMode::logits;
  if (m == "labels_only") return OracleMode::labels_only;
  throw std::invalid_argument(
      "config key 'attack.oracle_mode' must be logits or labels_only");
}

FinetuneConfig RunConfig::finetune() const {
  const json& f = doc_.at("finetune");
  FinetuneConfig cfg;
  cfg.mode = f.at("mode").get<std::string>();
  cfg.lambda_sd = f.at("lambda_sd").get<double>();
  cfg.epochs = f.at("epochs").get<int>();
  cfg.batch_size = f.at("batch_size").get<int>();
  cfg.lr = f.at("lr").get<double>();
  cfg.seed = seed();
  return cfg;
}

double RunConfig::finetune_fraction() const {
  return doc_.at("finetune").at("authorized_fraction").get<double>();
}

bool RunConfig::log_density() const {
  return doc_.at("diagnostics").at("log_density").get<bool>();
}

std::vector<double> RunConfig::sweep_lambda_cf() const {
  return doc_.at("sweep").at("lambda_cf").get<std::vector<double>>();
}

std::vector<double> RunConfig::sweep_lambda_ba() const {
  return doc_.at("sweep").at("lambda_ba").get<std::vector<double>>();
}

}  // namespace ntljb
