#include "linkglm/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace linkglm::cli {

namespace {

// Reads the members of one JSON object and rejects keys that were never asked for.
class Reader {
public:
    Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key)
    {
        seen_.insert(key);
        return obj_.contains(key) && !obj_.at(key).is_null();
    }

    const Json& raw(const std::string& key)
    {
        seen_.insert(key);
        return obj_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        if (!has(key)) return;
        out = convert<T>(obj_.at(key), field(key));
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out)
    {
        if (!has(key)) return;
        out = convert<T>(obj_.at(key), field(key));
    }

    template <class T>
    T require(const std::string& key)
    {
        if (!has(key)) throw ConfigError(field(key), "required field is missing");
        return convert<T>(obj_.at(key), field(key));
    }

    Reader child(const std::string& key)
    {
        seen_.insert(key);
        return Reader(obj_.at(key), field(key));
    }

    void finish() const
    {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }

    template <class T>
    static T convert(const Json& j, const std::string& name)
    {
        if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) throw ConfigError(name, "expected true or false");
            return j.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!j.is_string()) throw ConfigError(name, "expected a string");
            return j.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer()) throw ConfigError(name, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (j.is_number_unsigned()) return j.get<T>();
                if (j.get<long long>() < 0) throw ConfigError(name, "expected a non-negative integer");
            }
            return j.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j.is_number()) throw ConfigError(name, "expected a number");
            return j.get<T>();
        } else {
            if (!j.is_array()) throw ConfigError(name, "expected an array");
            T out;
            for (std::size_t i = 0; i < j.size(); ++i)
                out.push_back(convert<typename T::value_type>(j[i], name + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

private:
    const Json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class Fn>
auto wrap(const std::string& field, Fn&& fn)
{
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(field, e.what());
    }
}

void require_nonempty(const std::string& field, const std::string& value)
{
    if (value.empty()) throw ConfigError(field, "must not be empty");
}

FamilyConfig parse_family(Reader r)
{
    FamilyConfig f;
    r.get("kind", f.kind);
    r.get("dispersion", f.dispersion);
    r.get("shape", f.shape);
    r.get("trials", f.trials);
    r.get("link", f.link);
    r.finish();
    wrap(r.field("kind"), [&] { return parse_family_kind(f.kind); });
    wrap(r.field("link"), [&] { return parse_link_kind(f.link); });
    wrap(r.field("kind"), [&] { return f.build(); });
    return f;
}

FilterRule parse_filter(Reader r)
{
    static const std::set<std::string> ops{"==", "!=", "<", "<=", ">", ">=", "in"};
    FilterRule rule;
    rule.column = r.require<std::string>("column");
    r.get("op", rule.op);
    if (!ops.count(rule.op)) throw ConfigError(r.field("op"), "unsupported operator '" + rule.op + "'");
    if (!r.has("value") && !r.has("values")) throw ConfigError(r.field("value"), "required field is missing");
    if (r.has("value")) {
        const Json& v = r.raw("value");
        rule.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    if (r.has("values")) {
        for (const Json& v : r.raw("values")) rule.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    if (rule.values.empty()) throw ConfigError(r.field("values"), "must not be empty");
    if (rule.op != "in" && rule.values.size() != 1) throw ConfigError(r.field("values"), "operator takes one value");
    r.finish();
    return rule;
}

DataConfig parse_data(Reader r)
{
    DataConfig d;
    d.path = r.require<std::string>("path");
    require_nonempty(r.field("path"), d.path);
    std::string delim = ",";
    r.get("delimiter", delim);
    if (delim == "\\t" || delim == "tab") delim = "\t";
    if (delim.size() != 1) throw ConfigError(r.field("delimiter"), "must be a single character");
    d.delimiter = delim[0];
    d.response = r.require<std::string>("response");
    require_nonempty(r.field("response"), d.response);
    r.get("truth_response", d.truth_response);
    r.get("intercept", d.intercept);
    r.get("covariates", d.covariates);
    r.get("transform", d.transform);
    if (d.transform != "none" && d.transform != "sqrt")
        throw ConfigError(r.field("transform"), "expected none or sqrt");
    r.get("blocking", d.blocking);
    if (r.has("categorical")) {
        const Json& arr = r.raw("categorical");
        if (!arr.is_array()) throw ConfigError(r.field("categorical"), "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string f = r.field("categorical") + "[" + std::to_string(i) + "]";
            CategoricalSpec c;
            if (arr[i].is_string()) {
                c.column = arr[i].get<std::string>();
            } else {
                Reader cr(arr[i], f);
                c.column = cr.require<std::string>("column");
                if (cr.has("reference")) {
                    const Json& v = cr.raw("reference");
                    c.reference = v.is_string() ? v.get<std::string>() : v.dump();
                }
                if (cr.has("levels"))
                    for (const Json& v : cr.raw("levels")) c.levels.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                cr.finish();
            }
            d.categorical.push_back(std::move(c));
        }
    }
    if (r.has("indicators")) {
        const Json& arr = r.raw("indicators");
        if (!arr.is_array()) throw ConfigError(r.field("indicators"), "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Reader ir(arr[i], r.field("indicators") + "[" + std::to_string(i) + "]");
            IndicatorSpec s;
            s.name = ir.require<std::string>("name");
            s.column = ir.require<std::string>("column");
            if (!ir.has("values")) throw ConfigError(ir.field("values"), "required field is missing");
            for (const Json& v : ir.raw("values")) s.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            if (s.values.empty()) throw ConfigError(ir.field("values"), "must not be empty");
            ir.finish();
            d.indicators.push_back(std::move(s));
        }
    }
    if (r.has("interactions")) {
        const Json& arr = r.raw("interactions");
        if (!arr.is_array()) throw ConfigError(r.field("interactions"), "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Reader ir(arr[i], r.field("interactions") + "[" + std::to_string(i) + "]");
            InteractionSpec s;
            s.a = ir.require<std::string>("a");
            s.b = ir.require<std::string>("b");
            s.name = s.a + "*" + s.b;
            ir.get("name", s.name);
            ir.finish();
            d.interactions.push_back(std::move(s));
        }
    }
    if (r.has("filters")) {
        const Json& arr = r.raw("filters");
        if (!arr.is_array()) throw ConfigError(r.field("filters"), "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i)
            d.filters.push_back(parse_filter(Reader(arr[i], r.field("filters") + "[" + std::to_string(i) + "]")));
    }
    if (r.has("derived")) {
        const Json& arr = r.raw("derived");
        if (!arr.is_array()) throw ConfigError(r.field("derived"), "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Reader dr(arr[i], r.field("derived") + "[" + std::to_string(i) + "]");
            DerivedColumn c;
            c.name = dr.require<std::string>("name");
            c.from = dr.require<std::string>("from");
            dr.get("scale", c.scale);
            dr.get("offset", c.offset);
            dr.get("round", c.round);
            dr.finish();
            d.derived.push_back(std::move(c));
        }
    }
    r.finish();
    return d;
}

std::vector<double> parse_prefactors(Reader& r, const std::string& key)
{
    const Json& j = r.raw(key);
    const std::string name = r.field(key);
    std::vector<double> out;
    if (j.is_array()) {
        out = Reader::convert<std::vector<double>>(j, name);
    } else {
        Reader g(j, name);
        const double lo = g.require<double>("min");
        const double hi = g.require<double>("max");
        const int count = g.require<int>("count");
        g.finish();
        if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError(name, "need 0 < min <= max");
        if (count < 1) throw ConfigError(name + ".count", "must be positive");
        out = sim::log_grid(lo, hi, count);
    }
    if (out.empty()) throw ConfigError(name, "must not be empty");
    for (double c : out)
        if (!(c > 0.0)) throw ConfigError(name, "pre-factors must be positive");
    return out;
}

FitOptions parse_fit_options(Reader r)
{
    FitOptions o;
    r.get("tol", o.tol);
    r.get("rel_objective_tol", o.rel_objective_tol);
    r.get("max_iter", o.max_iter);
    r.get("max_halvings", o.max_halvings);
    r.get("clamp_eps", o.clamp_eps);
    r.finish();
    if (!(o.tol > 0.0)) throw ConfigError(r.field("tol"), "must be positive");
    if (o.max_iter < 1) throw ConfigError(r.field("max_iter"), "must be positive");
    if (o.max_halvings < 0) throw ConfigError(r.field("max_halvings"), "must be non-negative");
    return o;
}

MethodConfig parse_method(Reader r)
{
    MethodConfig m;
    r.get("methods", m.methods);
    if (m.methods.empty()) throw ConfigError(r.field("methods"), "must not be empty");
    for (std::size_t i = 0; i < m.methods.size(); ++i)
        wrap(r.field("methods") + "[" + std::to_string(i) + "]", [&] { return sim::parse_method(m.methods[i]); });
    r.get("lambda", m.lambda);
    if (m.lambda && !(*m.lambda >= 0.0)) throw ConfigError(r.field("lambda"), "must be non-negative");
    if (r.has("prefactors")) m.prefactors = parse_prefactors(r, "prefactors");
    r.get("validation_fraction", m.validation_fraction);
    if (!(m.validation_fraction >= 0.0 && m.validation_fraction <= 0.5))
        throw ConfigError(r.field("validation_fraction"), "must lie in [0, 0.5]");
    r.get("sigma_mode", m.sigma_mode);
    wrap(r.field("sigma_mode"), [&] { return sim::parse_sigma_mode(m.sigma_mode); });
    if (r.has("fit")) m.fit = parse_fit_options(r.child("fit"));
    r.finish();
    return m;
}

sim::SimulationScenario parse_simulation(Reader r, const FamilyConfig& fam)
{
    sim::SimulationScenario s;
    s.family = fam.build();
    s.prefactors = sim::log_grid(0.1, 2.0, 12);
    r.get("name", s.name);
    long long n = s.n, d = s.d;
    r.get("n", n);
    r.get("d", d);
    s.n = n;
    s.d = d;
    r.get("beta_norm", s.beta_norm);
    r.get("intercept", s.intercept);
    r.get("mismatch_fraction", s.mismatch_fraction);
    std::string design = sim::to_string(s.design), perm = sim::to_string(s.permutation), sigma = sim::to_string(s.sigma_mode);
    r.get("design", design);
    r.get("permutation", perm);
    r.get("sigma_mode", sigma);
    s.design = wrap(r.field("design"), [&] { return sim::parse_design(design); });
    s.permutation = wrap(r.field("permutation"), [&] { return sim::parse_permutation_scheme(perm); });
    s.sigma_mode = wrap(r.field("sigma_mode"), [&] { return sim::parse_sigma_mode(sigma); });
    if (r.has("block_sizes")) {
        for (long long b : r.require<std::vector<long long>>("block_sizes")) s.block_sizes.push_back(b);
    }
    if (r.has("block_size")) {
        const long long b = r.require<long long>("block_size");
        if (b < 1 || s.n % b != 0) throw ConfigError(r.field("block_size"), "must be positive and divide n");
        s.block_sizes.assign(static_cast<std::size_t>(s.n / b), b);
    }
    if (r.has("prefactors")) s.prefactors = parse_prefactors(r, "prefactors");
    r.get("replications", s.replications);
    if (r.has("methods")) {
        s.methods.clear();
        const auto names = r.require<std::vector<std::string>>("methods");
        for (std::size_t i = 0; i < names.size(); ++i)
            s.methods.push_back(wrap(r.field("methods") + "[" + std::to_string(i) + "]", [&] { return sim::parse_method(names[i]); }));
    }
    if (r.has("fit")) s.fit_options = parse_fit_options(r.child("fit"));
    r.finish();
    wrap(r.field("n"), [&] {
        s.validate();
        return 0;
    });
    return s;
}

CaseStudyConfig parse_casestudy(Reader r)
{
    CaseStudyConfig c;
    r.get("replications", c.replications);
    if (c.replications < 1) throw ConfigError(r.field("replications"), "must be positive");
    c.linkage_blocking = r.require<std::vector<std::string>>("linkage_blocking");
    if (c.linkage_blocking.empty()) throw ConfigError(r.field("linkage_blocking"), "must not be empty");
    if (r.has("blocking_variants"))
        c.blocking_variants = r.require<std::vector<std::vector<std::string>>>("blocking_variants");
    else
        c.blocking_variants = {c.linkage_blocking};
    for (std::size_t i = 0; i < c.blocking_variants.size(); ++i)
        if (c.blocking_variants[i].empty())
            throw ConfigError(r.field("blocking_variants") + "[" + std::to_string(i) + "]", "must not be empty");
    r.finish();
    return c;
}

Json family_json(const FamilyConfig& f)
{
    return Json{{"kind", f.kind}, {"dispersion", f.dispersion}, {"shape", f.shape}, {"trials", f.trials}, {"link", f.link}};
}

Json fit_json(const FitOptions& o)
{
    return Json{{"tol", o.tol},
                {"rel_objective_tol", o.rel_objective_tol},
                {"max_iter", o.max_iter},
                {"max_halvings", o.max_halvings},
                {"clamp_eps", o.clamp_eps}};
}

} // namespace

Family<double> FamilyConfig::build() const
{
    const FamilyKind k = parse_family_kind(kind);
    const LinkKind l = parse_link_kind(link);
    switch (k) {
    case FamilyKind::Gaussian:
        if (l != LinkKind::Canonical) throw InvalidInput("the gaussian family only supports the canonical link");
        return Family<double>::gaussian(dispersion);
    case FamilyKind::Poisson:
        if (l != LinkKind::Canonical) throw InvalidInput("the poisson family only supports the canonical link");
        return Family<double>::poisson();
    case FamilyKind::Binomial:
        if (l != LinkKind::Canonical) throw InvalidInput("the binomial family only supports the canonical link");
        return Family<double>::binomial(trials);
    case FamilyKind::Bernoulli:
        if (l != LinkKind::Canonical) throw InvalidInput("the bernoulli family only supports the canonical link");
        return Family<double>::bernoulli();
    case FamilyKind::Gamma: return Family<double>::gamma(shape, l);
    }
    throw InvalidInput("unknown family");
}

RunConfig parse_config(const Json& doc)
{
    Reader r(doc, "");
    RunConfig cfg;
    r.get("command", cfg.command);
    if (r.has("seed")) cfg.seed = r.require<std::uint64_t>("seed");
    r.get("threads", cfg.threads);
    if (cfg.threads < 0) throw ConfigError("threads", "must be non-negative");
    if (r.has("family")) cfg.family = parse_family(r.child("family"));
    if (r.has("data")) cfg.data = parse_data(r.child("data"));
    if (r.has("method")) cfg.method = parse_method(r.child("method"));
    if (r.has("output")) {
        Reader o = r.child("output");
        o.get("directory", cfg.output.directory);
        o.get("timings", cfg.output.timings);
        o.finish();
    }
    if (r.has("simulation")) cfg.simulation = parse_simulation(r.child("simulation"), cfg.family);
    if (r.has("casestudy")) cfg.casestudy = parse_casestudy(r.child("casestudy"));
    r.finish();
    if (!cfg.command.empty()) {
        static const std::set<std::string> commands{"simulate", "fit", "recover", "casestudy"};
        if (!commands.count(cfg.command)) throw ConfigError("command", "unknown command '" + cfg.command + "'");
    }
    if (cfg.simulation) {
        cfg.simulation->seed = cfg.seed;
        cfg.simulation->threads = cfg.threads;
    }
    return cfg;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config", std::string("malformed document: ") + e.what());
    }
    return parse_config(doc);
}

Json resolved_config(const RunConfig& cfg)
{
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = cfg.command;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["family"] = family_json(cfg.family);
    if (cfg.data) {
        const auto& d = *cfg.data;
        Json dj;
        dj["path"] = d.path;
        dj["delimiter"] = std::string(1, d.delimiter);
        dj["response"] = d.response;
        if (d.truth_response) dj["truth_response"] = *d.truth_response;
        dj["intercept"] = d.intercept;
        dj["covariates"] = d.covariates;
        Json cats = Json::array();
        for (const auto& c : d.categorical) {
            Json cj{{"column", c.column}, {"levels", c.levels}};
            if (c.reference) cj["reference"] = *c.reference;
            cats.push_back(cj);
        }
        dj["categorical"] = cats;
        Json inds = Json::array();
        for (const auto& s : d.indicators) inds.push_back(Json{{"name", s.name}, {"column", s.column}, {"values", s.values}});
        dj["indicators"] = inds;
        Json inter = Json::array();
        for (const auto& s : d.interactions) inter.push_back(Json{{"name", s.name}, {"a", s.a}, {"b", s.b}});
        dj["interactions"] = inter;
        dj["transform"] = d.transform;
        dj["blocking"] = d.blocking;
        Json filters = Json::array();
        for (const auto& fr : d.filters) filters.push_back(Json{{"column", fr.column}, {"op", fr.op}, {"values", fr.values}});
        dj["filters"] = filters;
        Json derived = Json::array();
        for (const auto& c : d.derived)
            derived.push_back(Json{{"name", c.name}, {"from", c.from}, {"scale", c.scale}, {"offset", c.offset}, {"round", c.round}});
        dj["derived"] = derived;
        j["data"] = dj;
    }
    Json mj;
    mj["methods"] = cfg.method.methods;
    if (cfg.method.lambda) mj["lambda"] = *cfg.method.lambda;
    mj["prefactors"] = cfg.method.prefactors;
    mj["validation_fraction"] = cfg.method.validation_fraction;
    mj["sigma_mode"] = cfg.method.sigma_mode;
    mj["fit"] = fit_json(cfg.method.fit);
    j["method"] = mj;
    j["output"] = Json{{"directory", cfg.output.directory}, {"timings", cfg.output.timings}};
    if (cfg.simulation) {
        const auto& s = *cfg.simulation;
        Json sj;
        sj["name"] = s.name;
        sj["n"] = s.n;
        sj["d"] = s.d;
        sj["beta_norm"] = s.beta_norm;
        sj["intercept"] = s.intercept;
        sj["mismatch_fraction"] = s.mismatch_fraction;
        sj["design"] = sim::to_string(s.design);
        sj["permutation"] = sim::to_string(s.permutation);
        sj["block_sizes"] = s.block_sizes;
        sj["prefactors"] = s.prefactors;
        sj["replications"] = s.replications;
        sj["sigma_mode"] = sim::to_string(s.sigma_mode);
        Json methods = Json::array();
        for (auto m : s.methods) methods.push_back(sim::to_string(m));
        sj["methods"] = methods;
        sj["fit"] = fit_json(s.fit_options);
        j["simulation"] = sj;
    }
    if (cfg.casestudy) {
        j["casestudy"] = Json{{"replications", cfg.casestudy->replications},
                              {"linkage_blocking", cfg.casestudy->linkage_blocking},
                              {"blocking_variants", cfg.casestudy->blocking_variants}};
    }
    return j;
}

} // namespace linkglm::cli
