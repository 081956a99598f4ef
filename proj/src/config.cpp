#include "proxyfed/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace proxyfed {

namespace {

using nlohmann::json;

[[noreturn]] void bad_value(const std::string& key, const std::string& want, const json& got) {
    throw std::invalid_argument("config key '" + key + "': expected " + want + ", got " + got.dump());
}

long long as_int(const std::string& key, const json& v) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) bad_value(key, "an integer", v);
    return v.get<long long>();
}

std::uint64_t as_u64(const std::string& key, const json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        long long x = v.get<long long>();
        if (x < 0) bad_value(key, "a non-negative integer", v);
        return static_cast<std::uint64_t>(x);
    }
    bad_value(key, "an integer", v);
}

double as_double(const std::string& key, const json& v) {
    if (!v.is_number()) bad_value(key, "a number", v);
    return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) bad_value(key, "a boolean", v);
    return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
    if (!v.is_string()) bad_value(key, "a string", v);
    return v.get<std::string>();
}

LowConfMode parse_low_conf_mode(const std::string& key, const json& v) {
    std::string s = as_string(key, v);
    if (s == "discard") return LowConfMode::discard;
    if (s == "direct") return LowConfMode::direct;
    if (s == "icpl") return LowConfMode::icpl;
    throw std::invalid_argument("config key '" + key + "': must be one of discard, direct, icpl");
}

XiRule parse_xi_rule(const std::string& key, const json& v) {
    std::string s = as_string(key, v);
    if (s == "prior") return XiRule::prior;
    if (s == "top1") return XiRule::top1;
    if (s == "top5") return XiRule::top5;
    throw std::invalid_argument("config key '" + key + "': must be one of prior, top1, top5");
}

GptMetric parse_gpt_metric(const std::string& key, const json& v) {
    std::string s = as_string(key, v);
    if (s == "squared_euclidean") return GptMetric::squared_euclidean;
    if (s == "cosine") return GptMetric::cosine;
    throw std::invalid_argument("config key '" + key + "': must be one of squared_euclidean, cosine");
}

struct FieldDef {
    const char* key;
    std::function<void(RunConfig&, const json&)> set;
    std::function<json(const RunConfig&)> get;
};

const std::vector<FieldDef>& schema() {
    static const std::vector<FieldDef> defs = {
        {"master_seed", [](RunConfig& c, const json& v) { c.fed.master_seed = as_u64("master_seed", v); },
         [](const RunConfig& c) { return json(c.fed.master_seed); }},
        {"clients", [](RunConfig& c, const json& v) { c.fed.clients = static_cast<int>(as_int("clients", v)); },
         [](const RunConfig& c) { return json(c.fed.clients); }},
        {"sampled_per_round",
         [](RunConfig& c, const json& v) { c.fed.sampled_per_round = static_cast<int>(as_int("sampled_per_round", v)); },
         [](const RunConfig& c) { return json(c.fed.sampled_per_round); }},
        {"rounds", [](RunConfig& c, const json& v) { c.fed.rounds = static_cast<int>(as_int("rounds", v)); },
         [](const RunConfig& c) { return json(c.fed.rounds); }},
        {"local_epochs",
         [](RunConfig& c, const json& v) { c.fed.client.epochs = static_cast<int>(as_int("local_epochs", v)); },
         [](const RunConfig& c) { return json(c.fed.client.epochs); }},
        {"batch_size",
         [](RunConfig& c, const json& v) { c.fed.client.batch_size = static_cast<int>(as_int("batch_size", v)); },
         [](const RunConfig& c) { return json(c.fed.client.batch_size); }},
        {"local_lr", [](RunConfig& c, const json& v) { c.fed.client.lr = as_double("local_lr", v); },
         [](const RunConfig& c) { return json(c.fed.client.lr); }},
        {"tau", [](RunConfig& c, const json& v) { c.fed.client.tau = as_double("tau", v); },
         [](const RunConfig& c) { return json(c.fed.client.tau); }},
        {"loss_alpha", [](RunConfig& c, const json& v) { c.fed.client.alpha = as_double("loss_alpha", v); },
         [](const RunConfig& c) { return json(c.fed.client.alpha); }},
        {"loss_beta", [](RunConfig& c, const json& v) { c.fed.client.beta = as_double("loss_beta", v); },
         [](const RunConfig& c) { return json(c.fed.client.beta); }},
        {"low_conf_mode",
         [](RunConfig& c, const json& v) { c.fed.client.low_conf_mode = parse_low_conf_mode("low_conf_mode", v); },
         [](const RunConfig& c) { return json(low_conf_mode_name(c.fed.client.low_conf_mode)); }},
        {"xi_rule", [](RunConfig& c, const json& v) { c.fed.client.xi_rule = parse_xi_rule("xi_rule", v); },
         [](const RunConfig& c) { return json(xi_rule_name(c.fed.client.xi_rule)); }},
        {"weak_noise_std",
         [](RunConfig& c, const json& v) { c.fed.client.aug.weak_noise_std = as_double("weak_noise_std", v); },
         [](const RunConfig& c) { return json(c.fed.client.aug.weak_noise_std); }},
        {"strong_noise_std",
         [](RunConfig& c, const json& v) { c.fed.client.aug.strong_noise_std = as_double("strong_noise_std", v); },
         [](const RunConfig& c) { return json(c.fed.client.aug.strong_noise_std); }},
        {"strong_mask_prob",
         [](RunConfig& c, const json& v) { c.fed.client.aug.strong_mask_prob = as_double("strong_mask_prob", v); },
         [](const RunConfig& c) { return json(c.fed.client.aug.strong_mask_prob); }},
        {"dirichlet_alpha", [](RunConfig& c, const json& v) { c.fed.dirichlet_alpha = as_double("dirichlet_alpha", v); },
         [](const RunConfig& c) { return json(c.fed.dirichlet_alpha); }},
        {"gpt_enabled", [](RunConfig& c, const json& v) { c.fed.gpt_enabled = as_bool("gpt_enabled", v); },
         [](const RunConfig& c) { return json(c.fed.gpt_enabled); }},
        {"gpt_lr", [](RunConfig& c, const json& v) { c.fed.gpt.lr = as_double("gpt_lr", v); },
         [](const RunConfig& c) { return json(c.fed.gpt.lr); }},
        {"gpt_epochs", [](RunConfig& c, const json& v) { c.fed.gpt.epochs = static_cast<int>(as_int("gpt_epochs", v)); },
         [](const RunConfig& c) { return json(c.fed.gpt.epochs); }},
        {"gpt_metric", [](RunConfig& c, const json& v) { c.fed.gpt.metric = parse_gpt_metric("gpt_metric", v); },
         [](const RunConfig& c) { return json(gpt_metric_name(c.fed.gpt.metric)); }},
        {"input_dim", [](RunConfig& c, const json& v) { c.fed.data.input_dim = static_cast<int>(as_int("input_dim", v)); },
         [](const RunConfig& c) { return json(c.fed.data.input_dim); }},
        {"num_classes",
         [](RunConfig& c, const json& v) { c.fed.data.num_classes = static_cast<int>(as_int("num_classes", v)); },
         [](const RunConfig& c) { return json(c.fed.data.num_classes); }},
        {"samples_per_class",
         [](RunConfig& c, const json& v) { c.fed.data.samples_per_class = static_cast<int>(as_int("samples_per_class", v)); },
         [](const RunConfig& c) { return json(c.fed.data.samples_per_class); }},
        {"class_sphere_radius",
         [](RunConfig& c, const json& v) { c.fed.data.class_sphere_radius = as_double("class_sphere_radius", v); },
         [](const RunConfig& c) { return json(c.fed.data.class_sphere_radius); }},
        {"class_noise_std",
         [](RunConfig& c, const json& v) { c.fed.data.class_noise_std = as_double("class_noise_std", v); },
         [](const RunConfig& c) { return json(c.fed.data.class_noise_std); }},
        {"labeled_fraction",
         [](RunConfig& c, const json& v) { c.fed.data.labeled_fraction = as_double("labeled_fraction", v); },
         [](const RunConfig& c) { return json(c.fed.data.labeled_fraction); }},
        {"test_fraction", [](RunConfig& c, const json& v) { c.fed.data.test_fraction = as_double("test_fraction", v); },
         [](const RunConfig& c) { return json(c.fed.data.test_fraction); }},
        {"hidden_dim", [](RunConfig& c, const json& v) { c.fed.hidden_dim = static_cast<int>(as_int("hidden_dim", v)); },
         [](const RunConfig& c) { return json(c.fed.hidden_dim); }},
        {"feature_dim", [](RunConfig& c, const json& v) { c.fed.feature_dim = static_cast<int>(as_int("feature_dim", v)); },
         [](const RunConfig& c) { return json(c.fed.feature_dim); }},
        {"out_dir", [](RunConfig& c, const json& v) { c.out_dir = as_string("out_dir", v); },
         [](const RunConfig& c) { return json(c.out_dir); }},
    };
    return defs;
}

const FieldDef* find_field(const std::string& key) {
    for (const FieldDef& f : schema())
        if (key == f.key) return &f;
    return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const FieldDef& f : schema()) keys.push_back(f.key);
    return keys;
}

std::string low_conf_mode_name(LowConfMode m) {
    switch (m) {
        case LowConfMode::discard: return "discard";
        case LowConfMode::direct: return "direct";
        case LowConfMode::icpl: return "icpl";
    }
    return "?";
}

std::string xi_rule_name(XiRule r) {
    switch (r) {
        case XiRule::prior: return "prior";
        case XiRule::top1: return "top1";
        case XiRule::top5: return "top5";
    }
    return "?";
}

std::string gpt_metric_name(GptMetric m) {
    return m == GptMetric::squared_euclidean ? "squared_euclidean" : "cosine";
}

RunConfig parse_config_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    RunConfig cfg;
    bool have_seed = false;
    for (const auto& [key, value] : doc.items()) {
        const FieldDef* f = find_field(key);
        if (!f) throw std::invalid_argument("config: unknown key '" + key + "'");
        f->set(cfg, value);
        if (key == "master_seed") have_seed = true;
    }
    if (!have_seed) throw std::invalid_argument("config: missing required key 'master_seed'");
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse_config_json(doc);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);
    const FieldDef* f = find_field(key);
    if (!f) throw std::invalid_argument("override: unknown key '" + key + "'");

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded() || value.is_object() || value.is_array() || value.is_null())
        value = raw;  // bare words (enum names, paths) are strings
    f->set(cfg, value);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json doc = nlohmann::json::object();
    for (const FieldDef& f : schema()) doc[f.key] = f.get(cfg);
    return doc;
}

bool config_equal(const RunConfig& a, const RunConfig& b) { return config_to_json(a) == config_to_json(b); }

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_metrics_csv(std::ostream& os, const std::vector<RoundMetrics>& rounds, bool zero_wall_time) {
    os << "round,test_accuracy,pseudo_label_accuracy,excluded_count,loss_s,loss_u,loss_icpl,loss_gpt,"
          "comm_cost,wall_time\n";
    for (const RoundMetrics& r : rounds) {
        os << r.round << ',' << format_double(r.test_accuracy) << ','
           << (r.pl_defined ? format_double(r.pseudo_label_accuracy) : "nan") << ',' << r.excluded_count << ','
           << format_double(r.loss_s) << ',' << format_double(r.loss_u) << ',' << format_double(r.loss_icpl)
           << ',' << format_double(r.loss_gpt) << ',' << r.comm_cost << ','
           << format_double(zero_wall_time ? 0.0 : r.wall_time) << '\n';
    }
}

nlohmann::json summary_json(const RunConfig& cfg, const FederationResult& result,
                            double total_wall_seconds) {
    nlohmann::json doc;
    doc["config"] = config_to_json(cfg);
    doc["rounds_completed"] = result.rounds.size();
    doc["total_wall_time_seconds"] = total_wall_seconds;
    if (result.rounds.empty()) {
        doc["final_test_accuracy"] = nullptr;
        doc["final_pseudo_label_accuracy"] = nullptr;
    } else {
        const RoundMetrics& last = result.rounds.back();
        doc["final_test_accuracy"] = last.test_accuracy;
        doc["final_pseudo_label_accuracy"] =
            last.pl_defined ? nlohmann::json(last.pseudo_label_accuracy) : nlohmann::json(nullptr);
    }
    return doc;
}

}  // namespace proxyfed
