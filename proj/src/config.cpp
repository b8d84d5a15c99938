#include "ddnn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ddnn/errors.hpp"

namespace ddnn {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + msg);
}

int64_t parse_int(const std::string& v, const std::string& src, int line) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        fail(src, line, "expected an integer, got '" + v + "'");
    return out;
}

uint64_t parse_u64(const std::string& v, const std::string& src, int line) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        fail(src, line, "expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& v, const std::string& src, int line) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        fail(src, line, "expected a number, got '" + v + "'");
    return out;
}

std::vector<double> parse_list(const std::string& v, const std::string& src, int line) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) out.push_back(parse_double(trim(item), src, line));
    if (out.empty()) fail(src, line, "expected a comma-separated list of numbers");
    return out;
}

std::string num(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += num(v[i]);
    }
    return out;
}

} // namespace

RunConfig parse_config(const std::string& text, const std::string& source_name) {
    RunConfig c;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;

    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(source_name, lineno, "unterminated section header");
            section = t.substr(1, t.size() - 2);
            if (section != "data" && section != "model" && section != "train" &&
                section != "policy" && section != "output")
                fail(source_name, lineno, "unknown section [" + section + "]");
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) fail(source_name, lineno, "expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (section.empty()) fail(source_name, lineno, "key before any [section]");

        if (section == "data") {
            if (key == "path") c.data.path = val;
            else if (key == "synth_samples")
                c.data.synth_samples = static_cast<int>(parse_int(val, source_name, lineno));
            else if (key == "absence")
                c.data.absence = parse_list(val, source_name, lineno);
            else if (key == "noise_sigma")
                c.data.noise_sigma = parse_double(val, source_name, lineno);
            else if (key == "split_fraction")
                c.data.split_fraction = parse_double(val, source_name, lineno);
            else
                fail(source_name, lineno, "unknown key '" + key + "' in [data]");
        } else if (section == "model") {
            if (key == "devices")
                c.model.devices = static_cast<int>(parse_int(val, source_name, lineno));
            else if (key == "filters")
                c.model.filters = static_cast<int>(parse_int(val, source_name, lineno));
            else if (key == "scheme_local") c.model.scheme_local = val;
            else if (key == "scheme_cloud") c.model.scheme_cloud = val;
            else if (key == "exit_weight_local")
                c.model.exit_weight_local = parse_double(val, source_name, lineno);
            else if (key == "exit_weight_cloud")
                c.model.exit_weight_cloud = parse_double(val, source_name, lineno);
            else
                fail(source_name, lineno, "unknown key '" + key + "' in [model]");
        } else if (section == "train") {
            if (key == "epochs")
                c.train.epochs = static_cast<int>(parse_int(val, source_name, lineno));
            else if (key == "batch")
                c.train.batch = static_cast<int>(parse_int(val, source_name, lineno));
            else if (key == "alpha") c.train.alpha = parse_double(val, source_name, lineno);
            else if (key == "beta1") c.train.beta1 = parse_double(val, source_name, lineno);
            else if (key == "beta2") c.train.beta2 = parse_double(val, source_name, lineno);
            else if (key == "epsilon")
                c.train.epsilon = parse_double(val, source_name, lineno);
            else if (key == "seed") {
                c.train.seed = parse_u64(val, source_name, lineno);
                c.seed_from_file = true;
            } else
                fail(source_name, lineno, "unknown key '" + key + "' in [train]");
        } else if (section == "policy") {
            if (key == "threshold")
                c.policy.threshold = parse_double(val, source_name, lineno);
            else if (key == "grid") c.policy.grid = parse_list(val, source_name, lineno);
            else
                fail(source_name, lineno, "unknown key '" + key + "' in [policy]");
        } else { // output
            if (key == "dir") c.output.dir = val;
            else if (key == "jobs")
                c.output.jobs = static_cast<int>(parse_int(val, source_name, lineno));
            else
                fail(source_name, lineno, "unknown key '" + key + "' in [output]");
        }
    }

    // Range validation that does not depend on any command.
    if (c.data.synth_samples < 1)
        throw ValidationError(source_name + ": synth_samples must be >= 1");
    if (!(c.data.split_fraction > 0.0 && c.data.split_fraction < 1.0))
        throw ValidationError(source_name + ": split_fraction must be in (0, 1)");
    if (c.policy.threshold < 0.0 || c.policy.threshold > 1.0)
        throw ValidationError(source_name + ": threshold must be in [0, 1]");
    for (double g : c.policy.grid)
        if (g < 0.0 || g > 1.0)
            throw ValidationError(source_name + ": grid values must be in [0, 1]");
    if (c.output.jobs < 1) throw ValidationError(source_name + ": jobs must be >= 1");
    agg_from_name(c.model.scheme_local);
    agg_from_name(c.model.scheme_cloud);
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_config(os.str(), path);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "[data]\n";
    os << "path = " << c.data.path << "\n";
    os << "synth_samples = " << c.data.synth_samples << "\n";
    os << "absence = " << join(c.data.absence) << "\n";
    os << "noise_sigma = " << num(c.data.noise_sigma) << "\n";
    os << "split_fraction = " << num(c.data.split_fraction) << "\n";
    os << "\n[model]\n";
    os << "devices = " << c.model.devices << "\n";
    os << "filters = " << c.model.filters << "\n";
    os << "scheme_local = " << c.model.scheme_local << "\n";
    os << "scheme_cloud = " << c.model.scheme_cloud << "\n";
    os << "exit_weight_local = " << num(c.model.exit_weight_local) << "\n";
    os << "exit_weight_cloud = " << num(c.model.exit_weight_cloud) << "\n";
    os << "\n[train]\n";
    os << "epochs = " << c.train.epochs << "\n";
    os << "batch = " << c.train.batch << "\n";
    os << "alpha = " << num(c.train.alpha) << "\n";
    os << "beta1 = " << num(c.train.beta1) << "\n";
    os << "beta2 = " << num(c.train.beta2) << "\n";
    os << "epsilon = " << num(c.train.epsilon) << "\n";
    os << "seed = " << c.train.seed << "\n";
    os << "\n[policy]\n";
    os << "threshold = " << num(c.policy.threshold) << "\n";
    os << "grid = " << join(c.policy.grid) << "\n";
    os << "\n[output]\n";
    os << "dir = " << c.output.dir << "\n";
    os << "jobs = " << c.output.jobs << "\n";
    return os.str();
}

ModelConfig RunConfig::to_model_config() const {
    ModelConfig mc;
    mc.devices = model.devices;
    mc.filters = model.filters;
    mc.scheme_local = agg_from_name(model.scheme_local);
    mc.scheme_cloud = agg_from_name(model.scheme_cloud);
    mc.exit_weight_local = static_cast<float>(model.exit_weight_local);
    mc.exit_weight_cloud = static_cast<float>(model.exit_weight_cloud);
    return mc;
}

TrainConfig RunConfig::to_train_config() const {
    TrainConfig tc;
    tc.epochs = train.epochs;
    tc.batch_size = train.batch;
    tc.adam.alpha = static_cast<float>(train.alpha);
    tc.adam.beta1 = static_cast<float>(train.beta1);
    tc.adam.beta2 = static_cast<float>(train.beta2);
    tc.adam.epsilon = static_cast<float>(train.epsilon);
    tc.seed = train.seed;
    return tc;
}

SynthParams RunConfig::to_synth_params() const {
    SynthParams sp;
    sp.seed = Rng::derive(train.seed, "data");
    sp.n_samples = data.synth_samples;
    sp.absence_prob = data.absence;
    sp.noise_sigma = data.noise_sigma;
    return sp;
}

uint64_t resolve_seed(const RunConfig& cfg, const std::string& flag_seed,
                      const char* env_seed) {
    if (!flag_seed.empty()) {
        uint64_t s = 0;
        auto [p, ec] = std::from_chars(flag_seed.data(), flag_seed.data() + flag_seed.size(), s);
        if (ec != std::errc() || p != flag_seed.data() + flag_seed.size())
            throw ValidationError("--seed expects a non-negative integer");
        return s;
    }
    if (cfg.seed_from_file) return cfg.train.seed;
    if (env_seed && *env_seed) {
        uint64_t s = 0;
        const std::string e(env_seed);
        auto [p, ec] = std::from_chars(e.data(), e.data() + e.size(), s);
        if (ec != std::errc() || p != e.data() + e.size())
            throw ValidationError("DDNN_SEED expects a non-negative integer");
        return s;
    }
    return cfg.train.seed;
}

} // namespace ddnn
