#include "udddm/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace udddm {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad numeric value '" + v + "' for " + key);
    }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer value '" + v + "' for " + key);
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad unsigned value '" + v + "' for " + key);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "' for " + key);
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& item : split(v, ',')) out.push_back(parse_double(key, item));
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    for (const auto& item : split(v, ','))
        out.push_back(static_cast<int>(parse_int(key, item)));
    return out;
}

// "weight:mu0,mu1:s" entries joined by '|'
std::vector<GmmComponentSpec> parse_components(const std::string& v) {
    std::vector<GmmComponentSpec> out;
    if (trim(v).empty()) return out;
    for (const auto& entry : split(v, '|')) {
        const auto parts = split(entry, ':');
        if (parts.size() != 3)
            throw std::invalid_argument("config: gmm component must be weight:mu,...:s, got '" +
                                        entry + "'");
        GmmComponentSpec c;
        c.weight = parse_double("components.weight", parts[0]);
        c.mu = parse_double_list("components.mu", parts[1]);
        c.s = parse_double("components.s", parts[2]);
        out.push_back(std::move(c));
    }
    return out;
}

std::string fmt_double(double d) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    return buf;
}

std::string fmt_double_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += fmt_double(v[i]);
    }
    return s;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::string fmt_components(const std::vector<GmmComponentSpec>& comps) {
    std::string s;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (i) s += "|";
        s += fmt_double(comps[i].weight) + ":" + fmt_double_list(comps[i].mu) + ":" +
             fmt_double(comps[i].s);
    }
    return s;
}

void set_value(RunConfig& c, const std::string& section, const std::string& key,
               const std::string& value) {
    const std::string where = section + "." + key;
    if (section == "dataset") {
        if (key == "kind") c.dataset.kind = dataset_kind_from_name(value);
        else if (key == "n_data") c.dataset.n_data = parse_int(where, value);
        else if (key == "dim") c.dataset.dim = static_cast<int>(parse_int(where, value));
        else if (key == "seed") c.dataset.seed = parse_uint(where, value);
        else if (key == "radius") c.dataset.radius = parse_double(where, value);
        else if (key == "component_std") c.dataset.component_std = parse_double(where, value);
        else if (key == "noise_std") c.dataset.noise_std = parse_double(where, value);
        else if (key == "mu") c.dataset.mu = parse_double_list(where, value);
        else if (key == "s") c.dataset.s = parse_double(where, value);
        else if (key == "components") c.dataset.components = parse_components(value);
        else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "schedule") {
        if (key == "kind") {
            if (value != "vp-linear" && value != "ve-geometric" && value != "ve-karras")
                throw std::invalid_argument("config: unknown schedule kind '" + value + "'");
            c.schedule.kind = value;
        } else if (key == "T") c.schedule.T = static_cast<int>(parse_int(where, value));
        else if (key == "beta_start") c.schedule.beta_start = parse_double(where, value);
        else if (key == "beta_end") c.schedule.beta_end = parse_double(where, value);
        else if (key == "sigma_min") c.schedule.sigma_min = parse_double(where, value);
        else if (key == "sigma_max") c.schedule.sigma_max = parse_double(where, value);
        else if (key == "rho") c.schedule.rho = parse_double(where, value);
        else if (key == "kappa") {
            if (value != "sigma-min-over-sigma" && value != "sigma-data-over-sum" &&
                value != "sigma-data-sq-over-sum-sq")
                throw std::invalid_argument("config: unknown kappa variant '" + value + "'");
            c.schedule.kappa = value;
        } else if (key == "sigma_data") c.schedule.sigma_data = parse_double(where, value);
        else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "network") {
        if (key == "hidden_dims") c.network.hidden_dims = parse_int_list(where, value);
        else if (key == "time_embed_dim") c.network.time_embed_dim =
            static_cast<int>(parse_int(where, value));
        else if (key == "activation") c.network.activation = activation_from_name(value);
        else if (key == "seed") c.network.seed = parse_uint(where, value);
        else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "train") {
        if (key == "epochs") c.train.epochs = static_cast<int>(parse_int(where, value));
        else if (key == "batch_size") c.train.batch_size = static_cast<int>(parse_int(where, value));
        else if (key == "learning_rate") c.train.adam.learning_rate = parse_double(where, value);
        else if (key == "adam_beta1") c.train.adam.beta1 = parse_double(where, value);
        else if (key == "adam_beta2") c.train.adam.beta2 = parse_double(where, value);
        else if (key == "adam_epsilon") c.train.adam.epsilon = parse_double(where, value);
        else if (key == "ema_decay") c.train.ema_decay = parse_double(where, value);
        else if (key == "pseudo_huber_c") c.train.pseudo_huber_c = parse_double(where, value);
        else if (key == "grad_clip") c.train.grad_clip = parse_double(where, value);
        else if (key == "seed") c.train.seed = parse_uint(where, value);
        else if (key == "checkpoint_every") c.train.checkpoint_every =
            static_cast<int>(parse_int(where, value));
        else if (key == "buffer_backing") {
            if (value == "memory") c.train.buffer_backing = Backing::memory;
            else if (value == "disk") c.train.buffer_backing = Backing::disk_spill;
            else throw std::invalid_argument("config: buffer_backing must be memory or disk");
        } else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "sample") {
        if (key == "s") c.sample.s = static_cast<int>(parse_int(where, value));
        else if (key == "count") c.sample.count = parse_int(where, value);
        else if (key == "seed") c.sample.seed = parse_uint(where, value);
        else if (key == "record_trajectory") c.sample.record_trajectory = parse_bool(where, value);
        else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "eval") {
        if (key == "s_list") c.eval.s_list = parse_int_list(where, value);
        else if (key == "count") c.eval.count = parse_int(where, value);
        else if (key == "projections") c.eval.projections = static_cast<int>(parse_int(where, value));
        else if (key == "seed") c.eval.seed = parse_uint(where, value);
        else if (key == "heldout_count") c.eval.heldout_count = parse_int(where, value);
        else if (key == "heldout_seed") c.eval.heldout_seed = parse_uint(where, value);
        else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "verify") {
        if (key == "trials") c.verify.trials = static_cast<int>(parse_int(where, value));
        else if (key == "pairs") c.verify.pairs = static_cast<int>(parse_int(where, value));
        else if (key == "probes") c.verify.probes = static_cast<int>(parse_int(where, value));
        else if (key == "epsilon") c.verify.epsilon = parse_double(where, value);
        else if (key == "seed") c.verify.seed = parse_uint(where, value);
        else if (key == "ode_steps") c.verify.ode_steps = parse_int(where, value);
        else if (key == "score_scale") c.verify.score_scale = parse_double(where, value);
        else if (key == "drift_form") {
            if (value != "standard" && value != "printed")
                throw std::invalid_argument("config: drift_form must be standard or printed");
            c.verify.drift_form = value;
        } else throw std::invalid_argument("config: unknown key " + where);
    } else if (section == "output") {
        if (key == "dir") c.output_dir = value;
        else throw std::invalid_argument("config: unknown key " + where);
    } else {
        throw std::invalid_argument("config: unknown section [" + section + "]");
    }
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& text) {
    RunConfig c = default_run_config();
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        if (section.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": key outside any section");
        set_value(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream os;
    os << "[dataset]\n";
    os << "kind = " << dataset_kind_name(c.dataset.kind) << "\n";
    os << "n_data = " << c.dataset.n_data << "\n";
    os << "dim = " << c.dataset.dim << "\n";
    os << "seed = " << c.dataset.seed << "\n";
    os << "radius = " << fmt_double(c.dataset.radius) << "\n";
    os << "component_std = " << fmt_double(c.dataset.component_std) << "\n";
    os << "noise_std = " << fmt_double(c.dataset.noise_std) << "\n";
    os << "mu = " << fmt_double_list(c.dataset.mu) << "\n";
    os << "s = " << fmt_double(c.dataset.s) << "\n";
    os << "components = " << fmt_components(c.dataset.components) << "\n";
    os << "\n[schedule]\n";
    os << "kind = " << c.schedule.kind << "\n";
    os << "T = " << c.schedule.T << "\n";
    os << "beta_start = " << fmt_double(c.schedule.beta_start) << "\n";
    os << "beta_end = " << fmt_double(c.schedule.beta_end) << "\n";
    os << "sigma_min = " << fmt_double(c.schedule.sigma_min) << "\n";
    os << "sigma_max = " << fmt_double(c.schedule.sigma_max) << "\n";
    os << "rho = " << fmt_double(c.schedule.rho) << "\n";
    os << "kappa = " << c.schedule.kappa << "\n";
    os << "sigma_data = " << fmt_double(c.schedule.sigma_data) << "\n";
    os << "\n[network]\n";
    os << "hidden_dims = " << fmt_int_list(c.network.hidden_dims) << "\n";
    os << "time_embed_dim = " << c.network.time_embed_dim << "\n";
    os << "activation = " << activation_name(c.network.activation) << "\n";
    os << "seed = " << c.network.seed << "\n";
    os << "\n[train]\n";
    os << "epochs = " << c.train.epochs << "\n";
    os << "batch_size = " << c.train.batch_size << "\n";
    os << "learning_rate = " << fmt_double(c.train.adam.learning_rate) << "\n";
    os << "adam_beta1 = " << fmt_double(c.train.adam.beta1) << "\n";
    os << "adam_beta2 = " << fmt_double(c.train.adam.beta2) << "\n";
    os << "adam_epsilon = " << fmt_double(c.train.adam.epsilon) << "\n";
    os << "ema_decay = " << fmt_double(c.train.ema_decay) << "\n";
    os << "pseudo_huber_c = " << fmt_double(c.train.pseudo_huber_c) << "\n";
    os << "grad_clip = " << fmt_double(c.train.grad_clip) << "\n";
    os << "seed = " << c.train.seed << "\n";
    os << "checkpoint_every = " << c.train.checkpoint_every << "\n";
    os << "buffer_backing = "
       << (c.train.buffer_backing == Backing::memory ? "memory" : "disk") << "\n";
    os << "\n[sample]\n";
    os << "s = " << c.sample.s << "\n";
    os << "count = " << c.sample.count << "\n";
    os << "seed = " << c.sample.seed << "\n";
    os << "record_trajectory = " << (c.sample.record_trajectory ? "true" : "false") << "\n";
    os << "\n[eval]\n";
    os << "s_list = " << fmt_int_list(c.eval.s_list) << "\n";
    os << "count = " << c.eval.count << "\n";
    os << "projections = " << c.eval.projections << "\n";
    os << "seed = " << c.eval.seed << "\n";
    os << "heldout_count = " << c.eval.heldout_count << "\n";
    os << "heldout_seed = " << c.eval.heldout_seed << "\n";
    os << "\n[verify]\n";
    os << "trials = " << c.verify.trials << "\n";
    os << "pairs = " << c.verify.pairs << "\n";
    os << "probes = " << c.verify.probes << "\n";
    os << "epsilon = " << fmt_double(c.verify.epsilon) << "\n";
    os << "seed = " << c.verify.seed << "\n";
    os << "ode_steps = " << c.verify.ode_steps << "\n";
    os << "drift_form = " << c.verify.drift_form << "\n";
    os << "score_scale = " << fmt_double(c.verify.score_scale) << "\n";
    os << "\n[output]\n";
    os << "dir = " << c.output_dir << "\n";
    return os.str();
}

void apply_override(RunConfig& c, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be section.key=value, got '" + spec + "'");
    const auto dotted = trim(spec.substr(0, eq));
    const auto dot = dotted.find('.');
    if (dot == std::string::npos)
        throw std::invalid_argument("override must be section.key=value, got '" + spec + "'");
    set_value(c, dotted.substr(0, dot), dotted.substr(dot + 1), trim(spec.substr(eq + 1)));
}

Schedule build_schedule(const ScheduleConfig& c) {
    if (c.kind == "vp-linear") return make_vp_linear(c.T, c.beta_start, c.beta_end);
    KappaKind kk = KappaKind::sigma_min_over_sigma;
    if (c.kappa == "sigma-data-over-sum") kk = KappaKind::sigma_data_over_sum;
    if (c.kappa == "sigma-data-sq-over-sum-sq") kk = KappaKind::sigma_data_sq_over_sum_sq;
    VeSchedule ve = c.kind == "ve-geometric"
                        ? make_ve_geometric(c.T, c.sigma_min, c.sigma_max)
                        : make_ve_karras(c.T, c.sigma_min, c.sigma_max, c.rho);
    ve.kappa = kk;
    ve.sigma_data = c.sigma_data;
    return ve;
}

AnalyticDensity density_from_dataset_spec(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetKind::eight_gaussians: {
            std::vector<GaussianComponent> comps;
            for (int k = 0; k < 8; ++k) {
                const double ang = 2.0 * M_PI * static_cast<double>(k) / 8.0;
                comps.push_back({0.125,
                                 {spec.radius * std::cos(ang), spec.radius * std::sin(ang)},
                                 spec.component_std});
            }
            return AnalyticDensity::mixture(std::move(comps));
        }
        case DatasetKind::isotropic_gaussian: {
            auto mu = spec.mu;
            if (mu.empty()) mu.assign(static_cast<std::size_t>(spec.dim), 0.0);
            return AnalyticDensity::isotropic(mu, spec.s);
        }
        case DatasetKind::gmm: {
            std::vector<GaussianComponent> comps;
            for (const auto& c : spec.components) comps.push_back({c.weight, c.mu, c.s});
            return AnalyticDensity::mixture(std::move(comps));
        }
        case DatasetKind::two_moons:
            throw std::invalid_argument(
                "two-moons has no closed-form density; oracle checks need gaussian or gmm data");
    }
    throw std::logic_error("unreachable dataset kind");
}

DriftOptions drift_options(const VerifyConfig& c) {
    DriftOptions o;
    o.form = c.drift_form == "printed" ? DriftForm::printed_variant : DriftForm::standard_half;
    o.score_scale = c.score_scale;
    return o;
}

}  // namespace udddm
