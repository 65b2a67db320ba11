#include "casenbr/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "casenbr/errors.hpp"

namespace casenbr {

namespace {

using nlohmann::json;

struct Field {
  std::function<json()> get;
  std::function<void(const json&)> set;
};

template <typename T>
Field field(T& ref) {
  return {[&ref] { return json(ref); }, [&ref](const json& v) { ref = v.get<T>(); }};
}

template <typename E>
Field enum_field(E& ref, std::vector<std::pair<E, std::string>> names) {
  return {[&ref, names] {
            for (const auto& [e, n] : names)
              if (e == ref) return json(n);
            return json(nullptr);
          },
          [&ref, names](const json& v) {
            const auto s = v.get<std::string>();
            for (const auto& [e, n] : names)
              if (n == s) {
                ref = e;
                return;
              }
            throw ConfigError("invalid value '" + s + "'");
          }};
}

Field delimiter_field(char& ref) {
  return {[&ref] { return json(std::string(1, ref)); },
          [&ref](const json& v) {
            auto s = v.get<std::string>();
            if (s == "\\t" || s == "tab") s = "\t";
            if (s.size() != 1) throw ConfigError("delimiter must be a single character");
            ref = s[0];
          }};
}

std::map<std::string, Field> registry(RunConfig& c) {
  std::map<std::string, Field> f;
  f["data.schema"] =
      enum_field(c.csv.schema, {{Schema::absolute_day, "absolute"}, {Schema::gap, "gap"}});
  f["data.user_column"] = field(c.csv.user_column);
  f["data.item_column"] = field(c.csv.item_column);
  f["data.day_column"] = field(c.csv.day_column);
  f["data.order_column"] = field(c.csv.order_column);
  f["data.gap_column"] = field(c.csv.gap_column);
  f["data.day_format"] =
      enum_field(c.csv.day_format, {{DayFormat::integer, "integer"}, {DayFormat::date, "date"}});
  f["data.delimiter"] = delimiter_field(c.csv.delimiter);
  f["data.train_frac"] = field(c.train_frac);
  f["data.val_frac"] = field(c.val_frac);
  f["data.max_candidates"] = field(c.max_candidates);

  f["model.horizon"] = field(c.model.horizon);
  f["model.scales"] = field(c.model.scales);
  f["model.filters_per_scale"] = field(c.model.filters_per_scale);
  f["model.cadence_dim"] = field(c.model.cadence_dim);
  f["model.embedding_dim"] = field(c.model.embedding_dim);
  f["model.hidden_dim"] = field(c.model.hidden_dim);
  f["model.induced_points"] = field(c.model.induced_points);
  f["model.heads"] = field(c.model.heads);
  f["model.set_layers"] = field(c.model.set_layers);
  f["model.scorer_hidden"] = field(c.model.scorer_hidden);
  f["model.dropout"] = field(c.model.dropout);
  f["model.use_cnn"] = field(c.model.use_cnn);
  f["model.use_set_encoder"] = field(c.model.use_set_encoder);
  f["model.use_item_embedding"] = field(c.model.use_item_embedding);
  f["model.set_encoder"] = enum_field(
      c.model.set_encoder,
      {{SetEncoderKind::isab, "isab"}, {SetEncoderKind::perm_eq_mean, "perm_eq_mean"}});

  f["train.epochs"] = field(c.train.epochs);
  f["train.lr"] = field(c.train.lr);
  f["train.weight_decay"] = field(c.train.weight_decay);
  f["train.batch_size"] = field(c.train.batch_size);
  f["train.seed"] = field(c.train.seed);
  f["train.selection_metric"] = field(c.train.selection_metric);
  f["train.clip_norm"] = field(c.train.clip_norm);
  f["train.decoupled_decay"] = field(c.train.decoupled_decay);

  f["tifu.groups"] = field(c.tifu.groups);
  f["tifu.within_decay"] = field(c.tifu.within_decay);
  f["tifu.group_decay"] = field(c.tifu.group_decay);
  f["tifu.neighbors"] = field(c.tifu.neighbors);
  f["tifu.alpha"] = field(c.tifu.alpha);

  f["synth.n_users"] = field(c.synth.n_users);
  f["synth.periodic_items"] = field(c.synth.periodic_items);
  f["synth.distractor_items"] = field(c.synth.distractor_items);
  f["synth.periods"] = field(c.synth.periods);
  f["synth.jitter_sd"] = field(c.synth.jitter_sd);
  f["synth.p_miss"] = field(c.synth.p_miss);
  f["synth.distractor_rate"] = field(c.synth.distractor_rate);
  f["synth.horizon"] = field(c.synth.horizon);
  f["synth.item_pool"] = field(c.synth.item_pool);
  f["synth.seed"] = field(c.synth.seed);

  f["eval.ks"] = field(c.ks);
  f["eval.batch_size"] = field(c.eval_batch_size);
  return f;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

}  // namespace

void RunConfig::apply(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten(j, "", flat);
  auto fields = registry(*this);
  for (const auto& [key, value] : flat) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
      it->second.set(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what());
    }
  }
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  apply(json{{key, value}});
}

void RunConfig::validate() const {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("data.train_frac must lie in (0, 1)");
  if (!(val_frac >= 0.0 && train_frac + val_frac < 1.0))
    throw ConfigError("data.val_frac must be non-negative with train_frac + val_frac < 1");
  if (max_candidates == 0) throw ConfigError("data.max_candidates must be positive");
  model.validate();
  train.validate();
  tifu.validate();
  synth.validate();
  if (ks.empty()) throw ConfigError("eval.ks must not be empty");
  for (auto k : ks)
    if (k == 0) throw ConfigError("eval.ks entries must be at least 1");
  if (eval_batch_size == 0) throw ConfigError("eval.batch_size must be positive");
}

json RunConfig::to_json() const {
  RunConfig copy = *this;
  json out = json::object();
  for (const auto& [key, f] : registry(copy)) {
    json* node = &out;
    std::size_t start = 0;
    for (std::size_t dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
      node = &(*node)[key.substr(start, dot - start)];
      start = dot + 1;
    }
    (*node)[key.substr(start)] = f.get();
  }
  return out;
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& [key, _] : registry(c)) out.push_back(key);
  return out;
}

SplitSpec RunConfig::split() const {
  SplitSpec s;
  s.train_frac = train_frac;
  s.val_frac = val_frac;
  s.seed = derive_seed(train.seed, "ingest.split");
  return s;
}

ExampleOptions RunConfig::example_options() const {
  ExampleOptions o;
  o.horizon = model.horizon;
  o.max_candidates = max_candidates;
  return o;
}

std::uint64_t RunConfig::init_seed() const { return derive_seed(train.seed, "model.init"); }

json RunConfig::seed_tree() const {
  return {{"root", train.seed},
          {"ingest.split", split().seed},
          {"model.init", init_seed()},
          {"train.shuffle", derive_seed(train.seed, "train.shuffle")},
          {"train.dropout", derive_seed(train.seed, "train.dropout")},
          {"synth", synth.seed}};
}

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + file.string() + " is not valid JSON");
    c.apply(j);
  }
  for (const auto& o : overrides) c.set(o);
  c.validate();
  return c;
}

void write_resolved_config(const std::filesystem::path& dir, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  json j = config.to_json();
  j["seeds"] = config.seed_tree();
  std::ofstream out(dir / "config.resolved.json");
  if (!out) throw DataError("cannot write " + (dir / "config.resolved.json").string());
  out << j.dump(2) << '\n';
}

CsvFormat schema_preset(const std::string& name) {
  CsvFormat f;
  if (name == "absolute") return f;
  if (name == "gap") {
    f.schema = Schema::gap;
    return f;
  }
  if (name == "tafeng") {
    f.user_column = "CUSTOMER_ID";
    f.item_column = "PRODUCT_ID";
    f.day_column = "TRANSACTION_DT";
    f.day_format = DayFormat::date;
    return f;
  }
  throw ConfigError("unknown schema '" + name + "' (expected absolute, gap or tafeng)");
}

}  // namespace casenbr
