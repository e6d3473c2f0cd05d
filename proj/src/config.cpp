#include "nphawkes/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nphawkes {

namespace {

using nlohmann::json;

// A JSON object being read: remembers which keys were consumed so leftovers can be rejected.
class Section {
public:
    Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
        if (node_ && !node_->is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        if (!node_) return nullptr;
        const auto it = node_->find(key);
        if (it == node_->end() || it->is_null()) return nullptr;
        return &*it;
    }

    Section child(const std::string& key) { return Section(find(key), key_path(key)); }

    double number(const std::string& key, double fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
        const double x = v->get<double>();
        if (!std::isfinite(x)) throw ConfigError(key_path(key), "must be finite");
        return x;
    }

    std::optional<double> optional_number(const std::string& key) {
        if (!find(key)) return std::nullopt;
        return number(key, 0.0);
    }

    double positive(const std::string& key, double fallback) {
        const double x = number(key, fallback);
        if (!(x > 0.0)) throw ConfigError(key_path(key), "must be positive");
        return x;
    }

    long long integer(const std::string& key, long long fallback, long long min_value) {
        const json* v = find(key);
        long long x = fallback;
        if (v) {
            if (!v->is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
            x = v->get<long long>();
        }
        if (x < min_value) throw ConfigError(key_path(key), "must be at least " + std::to_string(min_value));
        return x;
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
        return v->get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
        return v->get<std::string>();
    }

    std::optional<std::vector<double>> numbers(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_array()) throw ConfigError(key_path(key), "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : *v) {
            if (!e.is_number()) throw ConfigError(key_path(key), "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::optional<std::array<std::size_t, 3>> counts(const std::string& key, std::size_t min_value) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        if (!v->is_array() || v->size() != 3) throw ConfigError(key_path(key), "expected three integers");
        std::array<std::size_t, 3> out{};
        for (std::size_t i = 0; i < 3; ++i) {
            const json& e = (*v)[i];
            if (!e.is_number_integer() || e.get<long long>() < static_cast<long long>(min_value)) {
                throw ConfigError(key_path(key), "entries must be integers >= " + std::to_string(min_value));
            }
            out[i] = static_cast<std::size_t>(e.get<long long>());
        }
        return out;
    }

    void finish() const {
        if (!node_) return;
        for (const auto& [key, value] : node_->items()) {
            if (!seen_.count(key)) throw ConfigError(key_path(key), "unknown key");
        }
    }

private:
    const json* node_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
auto wrap(const std::string& key, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
    }
}

GammaPrior read_prior(Section s, GammaPrior fallback) {
    GammaPrior p{s.positive("shape", fallback.shape), s.positive("rate", fallback.rate)};
    s.finish();
    return p;
}

struct KernelChoice {
    KernelFamily family{KernelFamily::RBF};
    KernelStructure structure{KernelStructure::Additive};
    std::vector<double> variances, lengthscales;
};

KernelChoice read_kernel(Section& s, const KernelChoice& base) {
    KernelChoice k = base;
    const std::string family = s.string("family", base.family == KernelFamily::RBF ? "rbf" : "matern");
    const std::optional<double> nu = s.optional_number("nu");
    if (family == "rbf") {
        k.family = KernelFamily::RBF;
    } else if (family == "matern") {
        const double v = nu.value_or(base.family == KernelFamily::RBF ? 2.5 : matern_nu(base.family));
        k.family = wrap(s.key_path("nu"), [&] { return matern_family(v); });
    } else {
        throw ConfigError(s.key_path("family"), "expected \"rbf\" or \"matern\"");
    }
    if (nu && k.family != KernelFamily::RBF) {
        k.family = wrap(s.key_path("nu"), [&] { return matern_family(*nu); });
    } else if (nu) {
        // nu is meaningless for RBF but must still be a supported value.
        wrap(s.key_path("nu"), [&] { return matern_family(*nu); });
    }
    k.structure = wrap(s.key_path("structure"), [&] { return parse_structure(s.string("structure", to_string(base.structure))); });
    if (auto v = s.numbers("variances")) k.variances = *v;
    if (auto l = s.numbers("lengthscales")) k.lengthscales = *l;
    return k;
}

std::vector<double> packed_initial(const KernelChoice& k, const std::string& key) {
    if (k.variances.empty() && k.lengthscales.empty()) return {};
    const std::size_t nv = KernelSpec::variance_count(k.structure);
    if (k.variances.size() != nv) {
        throw ConfigError(key + ".variances", "expected " + std::to_string(nv) + " values");
    }
    if (k.lengthscales.size() != 3) throw ConfigError(key + ".lengthscales", "expected 3 values");
    std::vector<double> out = k.variances;
    out.insert(out.end(), k.lengthscales.begin(), k.lengthscales.end());
    for (double v : out) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key, "hyperparameters must be positive");
    }
    return out;
}

json counts_json(const std::array<std::size_t, 3>& c) { return json::array({c[0], c[1], c[2]}); }

json kernel_initial_json(const GPComponentSettings& s) {
    json j = json::object();
    if (s.initial_hyperparameters.empty()) return j;
    const std::size_t nv = KernelSpec::variance_count(s.structure);
    j["variances"] = std::vector<double>(s.initial_hyperparameters.begin(), s.initial_hyperparameters.begin() + static_cast<long>(nv));
    j["lengthscales"] = std::vector<double>(s.initial_hyperparameters.begin() + static_cast<long>(nv), s.initial_hyperparameters.end());
    return j;
}

}  // namespace

QuadratureSet RunConfig::quadrature() const {
    return make_quadrature(window, mu_grid.value_or(mu_grid_counts(profile)),
                           phi_grid.value_or(phi_grid_counts(profile)));
}

std::vector<std::uint64_t> RunConfig::seeds() const {
    if (!restart_seeds.empty()) return restart_seeds;
    std::vector<std::uint64_t> out;
    for (int r = 0; r < restarts; ++r) out.push_back(seed * 1000 + static_cast<std::uint64_t>(r) + 1);
    return out;
}

ModelSpec RunConfig::resolved_model(std::size_t n_events) const {
    ModelSpec spec = model;
    const double alpha = sigmoid_alpha.value_or(default_sigmoid_alpha(n_events, window));
    for (LinkFunction* link : {&spec.mu.link, &spec.phi.link, &spec.baseline_link}) {
        if (link->kind == LinkKind::Sigmoid) link->alpha = alpha;
    }
    return spec;
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = text.find_first_not_of(" \t\r\n") == std::string::npos ? json::object() : json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed config document: ") + e.what());
    }
    return parse_config(doc);
}

RunConfig parse_config(const json& doc) {
    RunConfig c;
    Section root(&doc, "");
    c.seed = static_cast<std::uint64_t>(root.integer("seed", 0, 0));

    {
        Section w = root.child("window");
        auto& win = c.window;
        win.T = w.positive("T", win.T);
        win.X = w.positive("X", win.X);
        win.Y = w.positive("Y", win.Y);
        win.T_phi = w.positive("T_phi", win.T_phi);
        win.X_phi = w.positive("X_phi", win.X_phi);
        win.Y_phi = w.positive("Y_phi", win.Y_phi);
        w.finish();
        wrap("window", [&] { win.validate(); });
    }
    {
        Section g = root.child("grids");
        const std::string profile = g.string("profile", "full");
        if (profile == "full") {
            c.profile = GridProfile::Full;
        } else if (profile == "desk") {
            c.profile = GridProfile::Desk;
        } else {
            throw ConfigError("grids.profile", "expected \"full\" or \"desk\"");
        }
        c.mu_grid = g.counts("mu", 2);
        c.phi_grid = g.counts("phi", 2);
        g.finish();
    }
    {
        Section k = root.child("kernel");
        const KernelChoice shared = read_kernel(k, KernelChoice{});
        Section km = k.child("mu");
        const KernelChoice mu = read_kernel(km, shared);
        km.finish();
        Section kp = k.child("phi");
        const KernelChoice phi = read_kernel(kp, shared);
        kp.finish();
        k.finish();
        c.model.mu.family = mu.family;
        c.model.mu.structure = mu.structure;
        c.model.mu.initial_hyperparameters = packed_initial(mu, "kernel.mu");
        c.model.phi.family = phi.family;
        c.model.phi.structure = phi.structure;
        c.model.phi.initial_hyperparameters = packed_initial(phi, "kernel.phi");
    }
    {
        Section l = root.child("links");
        c.model.mu.link.kind = wrap("links.mu", [&] { return parse_link(l.string("mu", "softplus")); });
        c.model.phi.link.kind = wrap("links.phi", [&] { return parse_link(l.string("phi", "softplus")); });
        c.sigmoid_alpha = l.optional_number("sigmoid_alpha");
        if (c.sigmoid_alpha && !(*c.sigmoid_alpha > 0.0)) throw ConfigError("links.sigmoid_alpha", "must be positive");
        l.finish();
    }
    {
        Section i = root.child("inducing");
        if (auto m = i.counts("mu", 1)) c.model.mu.inducing_counts = *m;
        if (auto p = i.counts("phi", 1)) c.model.phi.inducing_counts = *p;
        i.finish();
    }
    {
        Section p = root.child("priors");
        const GammaPrior hyper = read_prior(p.child("hyper"), c.model.mu.prior);
        c.model.mu.prior = c.model.phi.prior = hyper;
        c.model.constant_prior = read_prior(p.child("constant"), c.model.constant_prior);
        c.model.trigger_prior = read_prior(p.child("trigger"), c.model.trigger_prior);
        p.finish();
    }
    {
        Section m = root.child("model");
        c.model.kind = wrap("model.kind", [&] { return parse_model_kind(m.string("kind", "ours")); });
        c.model.baseline_link.kind =
            wrap("model.baseline_link", [&] { return parse_link(m.string("baseline_link", "exp")); });
        const double scale = m.positive("init_scale", c.model.mu.init_scale);
        c.model.mu.init_scale = c.model.phi.init_scale = scale;
        c.model.data_init = m.boolean("data_init", c.model.data_init);
        m.finish();
    }
    {
        Section o = root.child("optimizer");
        auto& opt = c.optimizer;
        opt.iterations = static_cast<int>(o.integer("iterations", opt.iterations, 0));
        opt.step_size = o.positive("step_size", opt.step_size);
        opt.mc_samples = static_cast<int>(o.integer("mc_samples", opt.mc_samples, 1));
        opt.final_samples = static_cast<int>(o.integer("final_samples", opt.final_samples, 1));
        opt.beta1 = o.number("beta1", opt.beta1);
        opt.beta2 = o.number("beta2", opt.beta2);
        if (!(opt.beta1 >= 0.0 && opt.beta1 < 1.0)) throw ConfigError("optimizer.beta1", "must lie in [0, 1)");
        if (!(opt.beta2 >= 0.0 && opt.beta2 < 1.0)) throw ConfigError("optimizer.beta2", "must lie in [0, 1)");
        opt.epsilon = o.positive("epsilon", opt.epsilon);
        opt.cosine_decay = o.boolean("cosine_decay", opt.cosine_decay);
        c.restarts = static_cast<int>(o.integer("restarts", c.restarts, 1));
        if (const json* s = o.find("seeds")) {
            if (!s->is_array() || s->empty()) throw ConfigError("optimizer.seeds", "expected a non-empty array");
            for (const auto& e : *s) {
                if (!e.is_number_integer() || e.get<long long>() < 0) {
                    throw ConfigError("optimizer.seeds", "expected non-negative integers");
                }
                c.restart_seeds.push_back(e.get<std::uint64_t>());
            }
        }
        o.finish();
    }
    {
        Section s = root.child("simulate");
        c.simulate.scenario = static_cast<int>(s.integer("scenario", c.simulate.scenario, 1));
        if (c.simulate.scenario > 3) throw ConfigError("simulate.scenario", "expected 1, 2 or 3");
        c.simulate.realisations = static_cast<int>(s.integer("realisations", c.simulate.realisations, 1));
        s.finish();
    }
    {
        Section m = root.child("metrics");
        c.metrics.posterior_draws = static_cast<int>(m.integer("posterior_draws", c.metrics.posterior_draws, 1));
        c.metrics.scale_by_100 = m.boolean("scale_by_100", c.metrics.scale_by_100);
        if (m.find("scenario")) {
            const auto k = static_cast<int>(m.integer("scenario", 1, 1));
            if (k > 3) throw ConfigError("metrics.scenario", "expected 1, 2 or 3");
            c.metrics.scenario = k;
        }
        m.finish();
    }
    {
        Section d = root.child("diagnostics");
        c.diagnostics.k = d.optional_number("k");
        if (c.diagnostics.k && !(*c.diagnostics.k > 0.0)) throw ConfigError("diagnostics.k", "must be positive");
        c.diagnostics.quadrat_grid = static_cast<int>(d.integer("quadrat_grid", c.diagnostics.quadrat_grid, 1));
        d.finish();
    }
    {
        Section r = root.child("report");
        c.report.posterior_draws = static_cast<int>(r.integer("posterior_draws", c.report.posterior_draws, 2));
        c.report.credible_level = r.number("credible_level", c.report.credible_level);
        if (!(c.report.credible_level > 0.0 && c.report.credible_level < 1.0)) {
            throw ConfigError("report.credible_level", "must lie in (0, 1)");
        }
        r.finish();
    }
    {
        Section p = root.child("paths");
        c.events_path = p.string("events", "");
        c.fit_path = p.string("fit", "");
        p.finish();
    }
    root.finish();
    return c;
}

json config_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    const auto& w = c.window;
    j["window"] = {{"T", w.T}, {"X", w.X}, {"Y", w.Y}, {"T_phi", w.T_phi}, {"X_phi", w.X_phi}, {"Y_phi", w.Y_phi}};
    j["grids"] = {{"profile", c.profile == GridProfile::Full ? "full" : "desk"},
                  {"mu", counts_json(c.mu_grid.value_or(mu_grid_counts(c.profile)))},
                  {"phi", counts_json(c.phi_grid.value_or(phi_grid_counts(c.profile)))}};
    auto kernel = [](const GPComponentSettings& s) {
        json k = kernel_initial_json(s);
        k["family"] = to_string(s.family);
        if (s.family != KernelFamily::RBF) k["nu"] = matern_nu(s.family);
        k["structure"] = to_string(s.structure);
        return k;
    };
    j["kernel"] = {{"mu", kernel(c.model.mu)}, {"phi", kernel(c.model.phi)}};
    j["links"] = {{"mu", to_string(c.model.mu.link.kind)}, {"phi", to_string(c.model.phi.link.kind)}};
    j["links"]["sigmoid_alpha"] = c.sigmoid_alpha ? json(*c.sigmoid_alpha) : json(nullptr);
    j["inducing"] = {{"mu", counts_json(c.model.mu.inducing_counts)}, {"phi", counts_json(c.model.phi.inducing_counts)}};
    auto prior = [](const GammaPrior& p) { return json{{"shape", p.shape}, {"rate", p.rate}}; };
    j["priors"] = {{"hyper", prior(c.model.mu.prior)}, {"constant", prior(c.model.constant_prior)},
                   {"trigger", prior(c.model.trigger_prior)}};
    j["model"] = {{"kind", to_string(c.model.kind)}, {"baseline_link", to_string(c.model.baseline_link.kind)},
                  {"init_scale", c.model.mu.init_scale}, {"data_init", c.model.data_init}};
    const auto& o = c.optimizer;
    j["optimizer"] = {{"iterations", o.iterations}, {"step_size", o.step_size}, {"mc_samples", o.mc_samples},
                      {"final_samples", o.final_samples}, {"beta1", o.beta1}, {"beta2", o.beta2},
                      {"epsilon", o.epsilon}, {"cosine_decay", o.cosine_decay}, {"restarts", c.restarts},
                      {"seeds", c.seeds()}};
    j["simulate"] = {{"scenario", c.simulate.scenario}, {"realisations", c.simulate.realisations}};
    j["metrics"] = {{"posterior_draws", c.metrics.posterior_draws}, {"scale_by_100", c.metrics.scale_by_100}};
    j["metrics"]["scenario"] = c.metrics.scenario ? json(*c.metrics.scenario) : json(nullptr);
    j["diagnostics"] = {{"quadrat_grid", c.diagnostics.quadrat_grid}};
    j["diagnostics"]["k"] = c.diagnostics.k ? json(*c.diagnostics.k) : json(nullptr);
    j["report"] = {{"posterior_draws", c.report.posterior_draws}, {"credible_level", c.report.credible_level}};
    j["paths"] = {{"events", c.events_path}, {"fit", c.fit_path}};
    return j;
}

}  // namespace nphawkes
