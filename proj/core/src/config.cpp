#include "fedac/config.hpp"

#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <vector>

#include "fedac/errors.hpp"

namespace fedac {

namespace {

using nlohmann::json;

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"", {"run", "model", "data", "output"}},
    {"run",
     {"mode", "rounds", "seed", "eta", "mu", "lambda", "k_init", "reduction_dim", "cnt_lower",
      "cnt_upper", "sample_fraction", "local_epochs", "batch_size", "map_refresh_period",
      "cnt_period", "threads"}},
    {"model", {"hidden_sizes", "activation"}},
    {"data", {"source", "path", "seed", "partition", "synthetic"}},
    {"data.partition", {"kind", "alpha", "labels_per_client", "clients", "size_min", "size_max"}},
    {"data.synthetic",
     {"groups", "clients_per_group", "input_dim", "classes", "task_shift", "noise", "size_min",
      "size_max"}},
    {"output", {"dir"}},
};

void reject_unknown(const json& node, const std::string& prefix) {
  if (!node.is_object()) return;
  auto known = kKnownKeys.find(prefix);
  for (const auto& [key, value] : node.items()) {
    if (known == kKnownKeys.end() || !known->second.contains(key))
      throw config_error("unknown config key '" + (prefix.empty() ? key : prefix + "." + key) +
                         "'");
    reject_unknown(value, prefix.empty() ? key : prefix + "." + key);
  }
}

const json* find(const json& doc, const std::string& dotted) {
  const json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot - start);
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

double get_number(const json& doc, const std::string& key, double fallback) {
  const json* v = find(doc, key);
  if (!v) return fallback;
  if (!v->is_number()) throw config_error("config key '" + key + "' must be a number");
  return v->get<double>();
}

int get_int(const json& doc, const std::string& key, int fallback) {
  const json* v = find(doc, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) throw config_error("config key '" + key + "' must be an integer");
  return v->get<int>();
}

std::string get_string(const json& doc, const std::string& key, const std::string& fallback) {
  const json* v = find(doc, key);
  if (!v) return fallback;
  if (!v->is_string()) throw config_error("config key '" + key + "' must be a string");
  return v->get<std::string>();
}

void require(const json& doc, const std::string& key) {
  if (!find(doc, key)) throw config_error("missing required key " + key);
}

FullConfig from_json(const json& doc) {
  reject_unknown(doc, "");
  require(doc, "run.eta");
  require(doc, "run.rounds");
  require(doc, "data.source");

  FullConfig cfg;
  cfg.run.mode = parse_mode(get_string(doc, "run.mode", "fedac"));
  cfg.run.rounds = get_int(doc, "run.rounds", 0);
  if (const json* v = find(doc, "run.seed")) {
    if (!v->is_number_integer() || v->get<long long>() < 0)
      throw config_error("config key 'run.seed' must be a non-negative integer");
    cfg.run.seed = v->get<std::uint64_t>();
  }
  cfg.run.eta = get_number(doc, "run.eta", cfg.run.eta);
  cfg.run.mu = get_number(doc, "run.mu", cfg.run.mu);
  cfg.run.lambda = get_number(doc, "run.lambda", cfg.run.lambda);
  cfg.run.k_init = get_int(doc, "run.k_init", cfg.run.k_init);
  cfg.run.reduction_dim = get_int(doc, "run.reduction_dim", cfg.run.reduction_dim);
  cfg.run.cnt_lower = get_number(doc, "run.cnt_lower", cfg.run.cnt_lower);
  cfg.run.cnt_upper = get_number(doc, "run.cnt_upper", cfg.run.cnt_upper);
  cfg.run.sample_fraction = get_number(doc, "run.sample_fraction", cfg.run.sample_fraction);
  cfg.run.local_epochs = get_int(doc, "run.local_epochs", cfg.run.local_epochs);
  cfg.run.batch_size = get_int(doc, "run.batch_size", cfg.run.batch_size);
  cfg.run.map_refresh_period = get_int(doc, "run.map_refresh_period", cfg.run.map_refresh_period);
  cfg.run.cnt_period = get_int(doc, "run.cnt_period", cfg.run.cnt_period);
  cfg.run.threads = get_int(doc, "run.threads", cfg.run.threads);

  if (const json* v = find(doc, "model.hidden_sizes")) {
    if (!v->is_array() || v->empty())
      throw config_error("config key 'model.hidden_sizes' must be a non-empty array");
    cfg.run.hidden_sizes.clear();
    for (const json& h : *v) {
      if (!h.is_number_integer())
        throw config_error("config key 'model.hidden_sizes' must hold integers");
      cfg.run.hidden_sizes.push_back(h.get<int>());
    }
  }
  const std::string act = get_string(doc, "model.activation", "relu");
  if (act == "relu")
    cfg.run.activation = Activation::kRelu;
  else if (act == "tanh")
    cfg.run.activation = Activation::kTanh;
  else
    throw config_error("config key 'model.activation' must be relu or tanh");

  cfg.data.source = get_string(doc, "data.source", "");
  if (cfg.data.source != "synthetic" && cfg.data.source != "file")
    throw config_error("config key 'data.source' must be synthetic or file");
  cfg.data.path = get_string(doc, "data.path", "");
  if (const json* v = find(doc, "data.seed")) {
    if (!v->is_number_integer() || v->get<long long>() < 0)
      throw config_error("config key 'data.seed' must be a non-negative integer");
    cfg.data.seed = v->get<std::uint64_t>();
    cfg.data.seed_set = true;
  }

  cfg.data.has_partition = find(doc, "data.partition") != nullptr;
  if (cfg.data.has_partition) {
    cfg.data.partition_kind = get_string(doc, "data.partition.kind", cfg.data.partition_kind);
    if (cfg.data.partition_kind != "dirichlet" && cfg.data.partition_kind != "pathological")
      throw config_error("config key 'data.partition.kind' must be dirichlet or pathological");
    cfg.data.alpha = get_number(doc, "data.partition.alpha", cfg.data.alpha);
    cfg.data.labels_per_client =
        get_int(doc, "data.partition.labels_per_client", cfg.data.labels_per_client);
    cfg.data.clients = get_int(doc, "data.partition.clients", cfg.data.clients);
    cfg.data.size_min = get_int(doc, "data.partition.size_min", cfg.data.size_min);
    cfg.data.size_max = get_int(doc, "data.partition.size_max", cfg.data.size_max);
  }
  if (cfg.data.source == "file") {
    if (cfg.data.path.empty()) throw config_error("missing required key data.path");
    if (!cfg.data.has_partition) throw config_error("missing required key data.partition");
  }

  cfg.data.groups = get_int(doc, "data.synthetic.groups", cfg.data.groups);
  cfg.data.clients_per_group =
      get_int(doc, "data.synthetic.clients_per_group", cfg.data.clients_per_group);
  cfg.data.input_dim = get_int(doc, "data.synthetic.input_dim", cfg.data.input_dim);
  cfg.data.classes = get_int(doc, "data.synthetic.classes", cfg.data.classes);
  cfg.data.task_shift = get_number(doc, "data.synthetic.task_shift", cfg.data.task_shift);
  cfg.data.noise = get_number(doc, "data.synthetic.noise", cfg.data.noise);
  cfg.data.synthetic_size_min =
      get_int(doc, "data.synthetic.size_min", cfg.data.synthetic_size_min);
  cfg.data.synthetic_size_max =
      get_int(doc, "data.synthetic.size_max", cfg.data.synthetic_size_max);

  cfg.output.dir = get_string(doc, "output.dir", cfg.output.dir);
  return cfg;
}

void apply_override(json& doc, const std::string& setting) {
  const std::size_t eq = setting.find('=');
  if (eq == std::string::npos || eq == 0)
    throw config_error("override '" + setting + "' must look like key=value");
  const std::string key = setting.substr(0, eq);
  const std::string raw = setting.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings need no quoting
  }

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw config_error("override key '" + key + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object())
      throw config_error("override key '" + key + "' descends into a non-object");
    start = dot + 1;
  }
}

}  // namespace

FullConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw config_error(path.string() + ": top level must be an object");
  for (const std::string& setting : overrides) apply_override(doc, setting);
  return from_json(doc);
}

std::string render_config(const FullConfig& config) {
  json doc;
  json& run = doc["run"];
  run["mode"] = mode_name(config.run.mode);
  run["rounds"] = config.run.rounds;
  run["seed"] = config.run.seed;
  run["eta"] = config.run.eta;
  run["mu"] = config.run.mu;
  run["lambda"] = config.run.lambda;
  run["k_init"] = config.run.k_init;
  run["reduction_dim"] = config.run.reduction_dim;
  run["cnt_lower"] = config.run.cnt_lower;
  run["cnt_upper"] = config.run.cnt_upper;
  run["sample_fraction"] = config.run.sample_fraction;
  run["local_epochs"] = config.run.local_epochs;
  run["batch_size"] = config.run.batch_size;
  run["map_refresh_period"] = config.run.map_refresh_period;
  run["cnt_period"] = config.run.cnt_period;
  run["threads"] = config.run.threads;

  doc["model"]["hidden_sizes"] = config.run.hidden_sizes;
  doc["model"]["activation"] = config.run.activation == Activation::kRelu ? "relu" : "tanh";

  json& data = doc["data"];
  data["source"] = config.data.source;
  if (!config.data.path.empty()) data["path"] = config.data.path;
  if (config.data.seed_set) data["seed"] = config.data.seed;
  if (config.data.has_partition) {
    json& part = data["partition"];
    part["kind"] = config.data.partition_kind;
    part["alpha"] = config.data.alpha;
    part["labels_per_client"] = config.data.labels_per_client;
    part["clients"] = config.data.clients;
    part["size_min"] = config.data.size_min;
    part["size_max"] = config.data.size_max;
  }
  if (config.data.source == "synthetic") {
    json& syn = data["synthetic"];
    syn["groups"] = config.data.groups;
    syn["clients_per_group"] = config.data.clients_per_group;
    syn["input_dim"] = config.data.input_dim;
    syn["classes"] = config.data.classes;
    syn["task_shift"] = config.data.task_shift;
    syn["noise"] = config.data.noise;
    syn["size_min"] = config.data.synthetic_size_min;
    syn["size_max"] = config.data.synthetic_size_max;
  }
  doc["output"]["dir"] = config.output.dir;
  return doc.dump(2) + "\n";
}

ExperimentSetup build_setup(const FullConfig& config) {
  const std::uint64_t seed = config.data.seed_set ? config.data.seed : config.run.seed;
  ExperimentSetup setup;

  if (config.data.source == "synthetic") {
    SyntheticTask task = synthetic_clustered_task(
        config.data.groups, config.data.clients_per_group, config.data.input_dim,
        config.data.classes, config.data.task_shift, config.data.noise,
        config.data.synthetic_size_min, config.data.synthetic_size_max, seed);
    if (!config.data.has_partition) {
      AssembledClients assembled = assemble_synthetic(task, seed);
      setup.dataset = std::move(assembled.pool);
      setup.partitions = std::move(assembled.partitions);
      setup.grouping = std::move(task.grouping);
      return setup;
    }
    // Re-splitting the merged pool severs the link to the generating groups.
    setup.dataset = merge_datasets(task.client_data);
  } else {
    setup.dataset = load_dataset(config.data.path);
  }

  if (config.data.partition_kind == "dirichlet")
    setup.partitions = dirichlet_partition(setup.dataset, config.data.clients, config.data.alpha,
                                           config.data.size_min, config.data.size_max, seed);
  else
    setup.partitions =
        pathological_partition(setup.dataset, config.data.clients, config.data.labels_per_client,
                               config.data.size_min, config.data.size_max, seed);
  return setup;
}

}  // namespace fedac
