#include "metarx/config.hpp"

#include <cmath>
#include <json.hpp>
#include <stdexcept>

#include "metarx/meta.hpp"

namespace metarx {

using nlohmann::json;

std::vector<std::string> known_experiments() {
    return {"demod_ser_vs_t", "demod_ece_vs_t", "demod_reliability", "eq_scoring_map",
            "eq_active_vs_passive"};
}

double ExperimentConfig::snr_linear() const { return std::pow(10.0, snr_db / 10.0); }

bool ExperimentConfig::is_demod_family() const { return experiment.rfind("demod", 0) == 0; }

namespace {

ExperimentConfig demod_paper_defaults() {
    ExperimentConfig c;
    c.snr_db = 18.0;
    c.eta = 0.1;
    c.kappa = 1e-3;
    c.n_tr = 4;
    c.n_te = 3000;
    c.n_star_tr = 8;
    c.n_star_te = 4000;
    c.inner_steps = 2;
    c.inner_steps_star = 200;
    c.meta_iters = 200;
    c.ensemble = 100;
    c.r_train = 100;
    c.r_test = 100;
    c.t_init = 3;
    c.batch = 16;
    c.kl_coeff = 0.1;
    c.bins = 10;
    c.seeds = 5;
    c.t_grid = {2, 4, 8, 16};
    c.meta_test_frames = 50;
    return c;
}

ExperimentConfig eq_paper_defaults() {
    ExperimentConfig c;
    c.snr_db = 6.0;
    c.eta = 2e-3;
    c.kappa = 5e-2;
    c.n_tr = 4;
    c.n_te = 4;
    c.n_star_tr = 4;
    c.n_star_te = 1000;
    c.inner_steps = 2;
    c.inner_steps_star = 2;
    c.meta_iters = 100;  // meta-training iterations per acquisition round
    c.ensemble = 100;
    c.r_train = 100;
    c.r_test = 100;
    c.beta = 150.0;
    c.t_init = 3;
    c.batch = 0;  // full batch
    c.kl_coeff = 1.0;
    c.bins = 10;
    c.seeds = 100;
    c.t_grid = {};
    c.meta_test_frames = 100;
    c.budget = 10;
    return c;
}

void apply_desk_profile(ExperimentConfig& c) {
    if (c.is_demod_family()) {
        // CI-scale reductions; everything else keeps the paper values
        c.n_star_te = 1000;
        c.meta_test_frames = 10;
        c.meta_iters = 50;
        c.n_te = 300;
        c.r_train = 10;
        c.seeds = 5;
    } else {
        c.seeds = 20;
        c.meta_test_frames = 50;
        c.n_star_te = 200;
        c.r_train = 30;
        c.r_test = 50;
    }
}

void apply_override(ExperimentConfig& c, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    if (key == "snr_db") c.snr_db = as_double();
    else if (key == "eta") c.eta = as_double();
    else if (key == "kappa") c.kappa = as_double();
    else if (key == "n_tr") c.n_tr = as_int();
    else if (key == "n_te") c.n_te = as_int();
    else if (key == "n_star_tr") c.n_star_tr = as_int();
    else if (key == "n_star_te") c.n_star_te = as_int();
    else if (key == "I") c.inner_steps = as_int();
    else if (key == "I_star") c.inner_steps_star = as_int();
    else if (key == "I_meta") c.meta_iters = as_int();
    else if (key == "R") { c.ensemble = as_int(); c.r_train = as_int(); c.r_test = as_int(); }
    else if (key == "r_train") c.r_train = as_int();
    else if (key == "r_test") c.r_test = as_int();
    else if (key == "beta") c.beta = as_double();
    else if (key == "t_init") c.t_init = as_int();
    else if (key == "B") c.batch = as_int();
    else if (key == "kl_coeff") c.kl_coeff = as_double();
    else if (key == "M_bins") c.bins = as_int();
    else if (key == "seeds") c.seeds = as_int();
    else if (key == "meta_test_frames") c.meta_test_frames = as_int();
    else if (key == "budget") c.budget = as_int();
    else if (key == "t_grid") {
        c.t_grid.clear();
        std::size_t pos = 0;
        while (pos < value.size()) {
            std::size_t next = value.find(':', pos);
            if (next == std::string::npos) next = value.size();
            c.t_grid.push_back(std::stoi(value.substr(pos, next - pos)));
            pos = next + 1;
        }
    } else {
        throw std::invalid_argument("unknown config key: " + key);
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::resolve(const std::string& experiment,
                                           const std::string& profile,
                                           std::uint64_t master_seed,
                                           const std::map<std::string, std::string>& overrides) {
    bool known = false;
    for (const std::string& e : known_experiments()) known = known || e == experiment;
    if (!known) throw std::invalid_argument("unknown experiment: " + experiment);
    ExperimentConfig c =
        experiment.rfind("demod", 0) == 0 ? demod_paper_defaults() : eq_paper_defaults();
    c.experiment = experiment;
    c.profile = profile;
    c.master_seed = master_seed;
    if (profile == "desk") apply_desk_profile(c);
    else if (profile != "paper") throw std::invalid_argument("unknown profile: " + profile);
    for (const auto& [k, v] : overrides) apply_override(c, k, v);
    return c;
}

std::string ExperimentConfig::to_json(const std::map<std::string, std::string>& overrides) const {
    json j;
    j["experiment"] = experiment;
    j["profile"] = profile;
    j["snr_db"] = snr_db;
    j["eta"] = eta;
    j["kappa"] = kappa;
    j["n_tr"] = n_tr;
    j["n_te"] = n_te;
    j["n_star_tr"] = n_star_tr;
    j["n_star_te"] = n_star_te;
    j["I"] = inner_steps;
    j["I_star"] = inner_steps_star;
    j["I_meta"] = meta_iters;
    j["R"] = ensemble;
    j["r_train"] = r_train;
    j["r_test"] = r_test;
    j["beta"] = beta;
    j["t_init"] = t_init;
    j["B"] = batch;
    j["kl_coeff"] = kl_coeff;
    j["M_bins"] = bins;
    j["master_seed"] = master_seed;
    j["seeds"] = seeds;
    j["t_grid"] = t_grid;
    j["meta_test_frames"] = meta_test_frames;
    j["budget"] = budget;
    if (!overrides.empty()) j["overrides"] = overrides;
    return j.dump(2);
}

std::string ExperimentConfig::content_hash() const {
    const std::string s = to_json();
    const std::uint64_t h = fnv1a64(s.data(), s.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace metarx
