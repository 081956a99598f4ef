#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace proxyfed {

struct RunOptions {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value, applied in order
    std::string out_dir;                 // overrides the config's out_dir when set
    bool no_wall_time = false;           // write 0 in the wall_time column
    std::string save_params_path;        // checkpoint the final global model
    std::string load_params_path;        // start from a checkpoint instead of random init
};

struct SweepOptions {
    std::string config_path;
    std::vector<std::string> sweep_specs;  // key=v1,v2,...
    int seeds = 1;                         // master_seed, master_seed+1, ...
    std::string out_dir;
    bool no_wall_time = false;
};

struct GradcheckOptions {
    std::uint64_t seed = 20240817;
};

// Exit code 0 on success; diagnostics on err.
int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err);

// The finite-difference suite behind cmd_gradcheck: ten random instances per
// loss, worst guarded relative error each.
struct GradcheckLine {
    std::string loss_name;
    double max_rel_err = 0.0;
};

std::vector<GradcheckLine> gradcheck_suite(std::uint64_t seed);

}  // namespace proxyfed
