#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxyfed/federation.hpp"

namespace proxyfed {

// The run-config file: a flat JSON object mirroring FederationConfig plus
// out_dir. Every key has a default except master_seed; unknown keys are
// rejected outright.
struct RunConfig {
    FederationConfig fed;
    std::string out_dir = "out";
};

// All schema keys in canonical (emission) order.
std::vector<std::string> config_keys();

RunConfig parse_config_json(const nlohmann::json& doc);
RunConfig parse_config_file(const std::string& path);

// "key=value" override; the value is parsed as JSON when possible and
// treated as a bare string otherwise.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Exact echo of the effective config; parse_config_json of the result
// reproduces the RunConfig.
nlohmann::json config_to_json(const RunConfig& cfg);

bool config_equal(const RunConfig& a, const RunConfig& b);

std::string low_conf_mode_name(LowConfMode m);
std::string xi_rule_name(XiRule r);
std::string gpt_metric_name(GptMetric m);

// Doubles are printed with 17 significant digits so equal runs yield equal
// bytes and parsing the file back recovers the exact value.
std::string format_double(double v);

// Fixed schema: round, test_accuracy, pseudo_label_accuracy, excluded_count,
// loss_s, loss_u, loss_icpl, loss_gpt, comm_cost, wall_time. An undefined
// pseudo-label accuracy is written as "nan". zero_wall_time writes 0 in the
// wall_time column so byte-level comparisons can include every column.
void write_metrics_csv(std::ostream& os, const std::vector<RoundMetrics>& rounds, bool zero_wall_time);

nlohmann::json summary_json(const RunConfig& cfg, const FederationResult& result,
                            double total_wall_seconds);

}  // namespace proxyfed
