#include "linkglm/cli/commands.hpp"

#include "linkglm/baselines.hpp"
#include "linkglm/cli/csv.hpp"
#include "linkglm/cli/pipeline.hpp"
#include "linkglm/cli/records.hpp"
#include "linkglm/matching.hpp"
#include "linkglm/simlab.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

namespace linkglm::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.precision(17);
    return out;
}

void write_resolved(const RunConfig& cfg, const fs::path& dir)
{
    auto out = open_output(dir / "config.resolved");
    out << resolved_config(cfg).dump(2) << '\n';
}

Json vector_json(const Vector<double>& v)
{
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(encode_number(v(i)));
    return a;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body)
{
    unsigned t = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
    t = std::min<unsigned>(t, static_cast<unsigned>(std::max(count, 1)));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (t <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < t; ++k) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
}

const DataConfig& require_data(const RunConfig& cfg)
{
    if (!cfg.data) throw ConfigError("data", "required for the '" + cfg.command + "' command");
    return *cfg.data;
}

Ingested load_dataset(const RunConfig& cfg, const Family<double>& f)
{
    auto ing = ingest_csv(require_data(cfg));
    try {
        ing.data.validate(f);
    } catch (const InvalidInput& e) {
        throw InputError(cfg.data->path + ": " + e.what());
    }
    return ing;
}

std::vector<double> prefactors_or(const MethodConfig& m, std::vector<double> fallback)
{
    return m.prefactors.empty() ? fallback : m.prefactors;
}

struct LambdaChoice {
    double lambda = 0;
    double prefactor = kNaN;
    std::vector<double> grid;
    std::vector<double> validation_deviance;
};

// Fixed lambda if given; otherwise the pre-factor grid, narrowed by validation when requested.
LambdaChoice choose_lambda(const RunConfig& cfg, const Family<double>& f, const Ingested& ing, bool constrained,
                           const std::optional<BlockPartition>& blocks)
{
    LambdaChoice c;
    const auto& m = cfg.method;
    if (m.lambda) {
        c.lambda = *m.lambda;
        c.grid = {c.lambda};
        return c;
    }
    const auto& X = ing.data.X;
    const auto& y = ing.data.y;
    const auto prefactors = prefactors_or(m, {1.0});
    const double sigma = sim::sigma_y_data(f, y);
    c.grid = sim::lambda_grid(sigma, X.rows(), X.cols(), prefactors);
    c.lambda = c.grid.front();
    c.prefactor = prefactors.front();
    if (c.grid.size() > 1 && m.validation_fraction > 0.0) {
        const BlockPartition part = blocks ? *blocks : BlockPartition::singletons(X.rows());
        const Split split = validation_split(part, m.validation_fraction, cfg.seed);
        if (split.validation.empty() || split.train.size() < static_cast<std::size_t>(X.cols()))
            throw ConfigError("method.validation_fraction", "leaves no usable validation or training rows");
        const Vector<double>& yv = ing.y_truth ? *ing.y_truth : y;
        std::optional<BlockPartition> tb;
        if (constrained && blocks) tb = blocks->subset(split.train);
        const auto sel = select_lambda_validation(f, take_rows(X, split.train), take_rows(y, split.train),
                                                  take_rows(X, split.validation), take_rows(yv, split.validation), c.grid,
                                                  m.fit, tb);
        c.lambda = sel.lambda;
        c.prefactor = prefactors[sel.index];
        c.validation_deviance = sel.validation_deviance;
    }
    return c;
}

} // namespace

fs::path output_directory(const RunConfig& cfg)
{
    if (!cfg.output.directory.empty()) return cfg.output.directory;
    if (const char* env = std::getenv("LINKGLM_OUTPUT_DIR"); env && *env) return env;
    return "results";
}

void run_simulate(const RunConfig& cfg, const fs::path& dir)
{
    if (!cfg.simulation) throw ConfigError("simulation", "required for the 'simulate' command");
    auto results = sim::run_replications(*cfg.simulation);
    if (!cfg.output.timings)
        for (auto& rep : results)
            for (auto& r : rep.records) r.runtime_ms = 0.0;
    {
        auto out = open_output(dir / "records.ndtext");
        write_records(out, "simulate", utc_timestamp(), results, cfg.output.timings);
    }
    auto out = open_output(dir / "summary.tsv");
    write_summary(out, results);
}

void run_fit(const RunConfig& cfg, const fs::path& dir)
{
    const Family<double> f = cfg.family.build();
    const Ingested ing = load_dataset(cfg, f);
    const auto& X = ing.data.X;
    const auto& y = ing.data.y;
    const auto& blocks = ing.data.blocks;

    std::vector<Json> lines{header_record("fit", utc_timestamp())};
    std::ostringstream summary;
    summary.precision(12);
    summary << "schema_version\tmethod\tlambda\tterm\testimate\tstd_error\n";

    for (const auto& name : cfg.method.methods) {
        const sim::Method m = sim::parse_method(name);
        Json rec;
        rec["schema_version"] = kSchemaVersion;
        rec["kind"] = "fit";
        rec["method"] = name;
        Vector<double> beta;
        std::optional<Matrix<double>> cov;
        double lambda = kNaN;
        switch (m) {
        case sim::Method::Naive:
        case sim::Method::Oracle: {
            if (m == sim::Method::Oracle && !ing.y_truth)
                throw ConfigError("data.truth_response", "the oracle method needs the correctly linked response");
            const auto fit = fit_glm(f, X, m == sim::Method::Oracle ? *ing.y_truth : y);
            beta = fit.beta;
            rec["converged"] = fit.converged;
            rec["iterations"] = fit.iterations;
            break;
        }
        case sim::Method::Proposed:
        case sim::Method::Constrained: {
            const bool constrained = m == sim::Method::Constrained;
            if (constrained && !blocks) throw ConfigError("data.blocking", "the constrained method needs blocking columns");
            const auto choice = choose_lambda(cfg, f, ing, constrained, blocks);
            lambda = choice.lambda;
            const auto fit = constrained ? fit_penalized_constrained(f, X, y, lambda, *blocks, cfg.method.fit)
                                         : fit_penalized(f, X, y, lambda, cfg.method.fit);
            beta = fit.beta;
            rec["prefactor"] = encode_number(choice.prefactor);
            rec["converged"] = fit.converged;
            rec["iterations"] = fit.iterations;
            rec["objective"] = encode_number(fit.objective());
            rec["nonzero_offsets"] = (fit.xi.array() != 0.0).count();
            if (!choice.validation_deviance.empty()) {
                Json vd = Json::array();
                for (double v : choice.validation_deviance) vd.push_back(encode_number(v));
                rec["validation_deviance"] = vd;
            }
            break;
        }
        case sim::Method::LahiriLarsen:
        case sim::Method::Chambers: {
            if (!blocks) throw ConfigError("data.blocking", "method '" + name + "' needs blocking columns");
            const auto fit = m == sim::Method::LahiriLarsen ? fit_ll(f, X, y, *blocks) : fit_chambers(f, X, y, *blocks);
            beta = fit.beta;
            cov = fit.covariance;
            rec["converged"] = fit.converged;
            rec["iterations"] = fit.newton_iterations;
            rec["covariance_lower_bound"] = fit.covariance_lower_bound;
            rec["worse_than_intercept_only"] = fit.worse_than_intercept_only;
            break;
        }
        case sim::Method::Sorting:
            throw ConfigError("method.methods", "'sorting' is only available in simulations; use the recover command");
        }
        if (!beta.allFinite()) throw NumericError("method '" + name + "' produced non-finite coefficients");
        const Vector<double> eta = X * beta;
        rec["lambda"] = encode_number(lambda);
        rec["terms"] = ing.terms;
        rec["beta"] = vector_json(beta);
        rec["std_error"] = cov ? vector_json(Vector<double>(cov->diagonal().array().sqrt())) : Json(nullptr);
        rec["deviance"] = encode_number(deviance_on(f, y, eta));
        if (ing.y_truth) rec["deviance_truth"] = encode_number(deviance_on(f, *ing.y_truth, eta));
        lines.push_back(rec);
        for (Index j = 0; j < beta.size(); ++j) {
            const double se = cov ? std::sqrt((*cov)(j, j)) : kNaN;
            summary << kSchemaVersion << '\t' << name << '\t' << (std::isnan(lambda) ? std::string("NA") : std::to_string(lambda))
                    << '\t' << ing.terms[static_cast<std::size_t>(j)] << '\t' << beta(j) << '\t'
                    << (std::isnan(se) ? std::string("NA") : std::to_string(se)) << '\n';
        }
    }
    {
        auto out = open_output(dir / "records.ndtext");
        write_lines(out, lines);
    }
    auto out = open_output(dir / "summary.tsv");
    out << summary.str();
}

void run_recover(const RunConfig& cfg, const fs::path& dir)
{
    const Family<double> f = cfg.family.build();
    const Ingested ing = load_dataset(cfg, f);
    const auto& X = ing.data.X;
    const auto& y = ing.data.y;
    const auto& blocks = ing.data.blocks;
    const bool constrained = blocks.has_value();

    const auto choice = choose_lambda(cfg, f, ing, constrained, blocks);
    const auto fit = constrained ? fit_penalized_constrained(f, X, y, choice.lambda, *blocks, cfg.method.fit)
                                 : fit_penalized(f, X, y, choice.lambda, cfg.method.fit);
    const auto est = recover_permutation(f, X, y, fit.beta, blocks);
    const auto refit = fit_glm(f, X, est.corrected_y);

    Json rec;
    rec["schema_version"] = kSchemaVersion;
    rec["kind"] = "recover";
    rec["estimator"] = constrained ? "constrained" : "proposed";
    rec["lambda"] = encode_number(choice.lambda);
    rec["prefactor"] = encode_number(choice.prefactor);
    rec["terms"] = ing.terms;
    rec["beta"] = vector_json(fit.beta);
    rec["refit_beta"] = vector_json(refit.beta);
    rec["moved_fraction"] = encode_number(est.hamming);
    rec["deviance_refit"] = encode_number(deviance_on(f, est.corrected_y, Vector<double>(X * refit.beta)));
    if (ing.y_truth) {
        rec["l2_before"] = encode_number((y - *ing.y_truth).norm());
        rec["l2_after"] = encode_number((est.corrected_y - *ing.y_truth).norm());
    }
    {
        auto out = open_output(dir / "records.ndtext");
        write_lines(out, {header_record("recover", utc_timestamp()), rec});
    }
    auto out = open_output(dir / "summary.tsv");
    out << "schema_version\trow\tline\ty\tcorrected_y\tpaired_row\n";
    for (Index i = 0; i < y.size(); ++i)
        out << kSchemaVersion << '\t' << i << '\t' << ing.table.line_numbers[static_cast<std::size_t>(i)] << '\t' << y(i) << '\t'
            << est.corrected_y(i) << '\t' << est.pi_hat[static_cast<std::size_t>(i)] << '\n';
}

namespace {

struct CaseRecord {
    std::string method;
    int variant = -1;        // index into blocking_variants, -1 when not applicable
    std::string selection;   // "oracle" or "validation" for penalized fits
    double lambda = kNaN;
    double prefactor = kNaN;
    double deviance = kNaN;
    bool converged = false;
    bool na = false;
};

struct PathPoint {
    double deviance = kNaN;
    bool converged = false;
};

// Warm-started path over the grid (largest lambda first); returns the fits' deviance on y_star.
std::vector<PathPoint> penalized_path(const Family<double>& f, const Matrix<double>& X, const Vector<double>& y,
                                      const Vector<double>& y_star, const std::vector<double>& grid, const FitOptions& opts,
                                      const std::optional<BlockPartition>& blocks)
{
    std::vector<PathPoint> out(grid.size());
    std::vector<std::size_t> order(grid.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });
    std::optional<StartingPoint<double>> start;
    for (std::size_t idx : order) {
        try {
            const auto fit = blocks ? fit_penalized_constrained(f, X, y, grid[idx], *blocks, opts, start)
                                    : fit_penalized(f, X, y, grid[idx], opts, start);
            start = StartingPoint<double>{fit.beta, fit.xi};
            out[idx].deviance = deviance_on(f, y_star, Vector<double>(X * fit.beta));
            out[idx].converged = fit.converged;
        } catch (const NumericError&) {
        } catch (const DomainError&) {
        }
    }
    return out;
}

std::size_t argmin_larger_on_tie(const std::vector<PathPoint>& path, const std::vector<double>& grid)
{
    std::size_t best = path.size();
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (!std::isfinite(path[i].deviance)) continue;
        if (best == path.size() || path[i].deviance < path[best].deviance ||
            (path[i].deviance == path[best].deviance && grid[i] > grid[best]))
            best = i;
    }
    return best;
}

} // namespace

void run_casestudy(const RunConfig& cfg, const fs::path& dir)
{
    if (!cfg.casestudy) throw ConfigError("casestudy", "required for the 'casestudy' command");
    const auto& cs = *cfg.casestudy;
    const Family<double> f = cfg.family.build();
    const Ingested ing = load_dataset(cfg, f);
    const auto& X = ing.data.X;
    const Vector<double>& y_star = ing.data.y;
    const Index n = X.rows();

    const BlockPartition linkage = blocks_from_columns(ing.table, cs.linkage_blocking);
    std::vector<BlockPartition> variants;
    for (const auto& cols : cs.blocking_variants) variants.push_back(blocks_from_columns(ing.table, cols));

    const auto oracle = fit_glm(f, X, y_star);
    const double oracle_dev = deviance_on(f, y_star, Vector<double>(X * oracle.beta));
    const Matrix<double> ones = Matrix<double>::Ones(n, 1);
    const auto null_fit = fit_glm(f, ones, y_star);
    const double null_dev = deviance_on(f, y_star, Vector<double>(ones * null_fit.beta));

    const auto prefactors = prefactors_or(cfg.method, sim::log_grid(0.05, 3.0, 15));
    const double vfrac = cfg.method.validation_fraction;

    std::vector<std::vector<CaseRecord>> per_rep(static_cast<std::size_t>(cs.replications));
    std::vector<double> realized(static_cast<std::size_t>(cs.replications), kNaN);

    auto replicate = [&](int r) {
        const auto rep = static_cast<std::uint64_t>(r);
        const Injection inj = inject_mismatch(ing.data, linkage, cfg.seed, rep);
        realized[static_cast<std::size_t>(r)] = inj.realized_fraction;
        const Vector<double>& y = inj.data.y;
        auto& recs = per_rep[static_cast<std::size_t>(r)];

        recs.push_back({"oracle", -1, "", kNaN, kNaN, oracle_dev, oracle.converged, false});
        {
            CaseRecord c{"naive", -1, "", kNaN, kNaN, kNaN, false, false};
            try {
                const auto fit = fit_glm(f, X, y);
                c.deviance = deviance_on(f, y_star, Vector<double>(X * fit.beta));
                c.converged = fit.converged;
            } catch (const std::exception&) {
                c.na = true;
            }
            recs.push_back(c);
        }
        for (std::size_t v = 0; v < variants.size(); ++v) {
            for (const bool ll : {true, false}) {
                CaseRecord c{ll ? "ll" : "chambers", static_cast<int>(v), "", kNaN, kNaN, kNaN, false, false};
                try {
                    const auto fit = ll ? fit_ll(f, X, y, variants[v]) : fit_chambers(f, X, y, variants[v]);
                    c.converged = fit.converged;
                    c.na = !fit.converged || !fit.beta.allFinite() || fit.worse_than_intercept_only;
                    if (!c.na) c.deviance = deviance_on(f, y_star, Vector<double>(X * fit.beta));
                } catch (const std::exception&) {
                    c.na = true;
                }
                recs.push_back(c);
            }
        }

        const double sigma = sim::sigma_y_data(f, y);
        const auto grid = sim::lambda_grid(sigma, n, X.cols(), prefactors);
        std::optional<Split> split;
        if (vfrac > 0.0) split = validation_split(linkage, vfrac, cfg.seed, rep);

        // Unconstrained estimator first, then one constrained fit per blocking variant.
        for (int v = -1; v < static_cast<int>(variants.size()); ++v) {
            std::optional<BlockPartition> blocks;
            if (v >= 0) blocks = variants[static_cast<std::size_t>(v)];
            const std::string name = v < 0 ? "proposed" : "constrained";
            const auto path = penalized_path(f, X, y, y_star, grid, cfg.method.fit, blocks);
            const std::size_t best = argmin_larger_on_tie(path, grid);
            CaseRecord c{name, v, "oracle", kNaN, kNaN, kNaN, false, best == path.size()};
            if (!c.na) {
                c.lambda = grid[best];
                c.prefactor = prefactors[best];
                c.deviance = path[best].deviance;
                c.converged = path[best].converged;
            }
            recs.push_back(c);
            if (!split) continue;
            CaseRecord s{name, v, "validation", kNaN, kNaN, kNaN, false, false};
            try {
                std::optional<BlockPartition> tb;
                if (blocks) tb = blocks->subset(split->train);
                const auto sel = select_lambda_validation(f, take_rows(X, split->train), take_rows(y, split->train),
                                                          take_rows(X, split->validation), take_rows(y_star, split->validation),
                                                          grid, cfg.method.fit, tb);
                s.lambda = sel.lambda;
                s.prefactor = prefactors[sel.index];
                const auto fit = blocks ? fit_penalized_constrained(f, X, y, sel.lambda, *blocks, cfg.method.fit)
                                        : fit_penalized(f, X, y, sel.lambda, cfg.method.fit);
                s.deviance = deviance_on(f, y_star, Vector<double>(X * fit.beta));
                s.converged = fit.converged;
            } catch (const std::exception&) {
                s.na = true;
            }
            recs.push_back(s);
        }
    };
    parallel_for(cs.replications, cfg.threads, replicate);

    std::vector<Json> lines{header_record("casestudy", utc_timestamp())};
    Json setup;
    setup["schema_version"] = kSchemaVersion;
    setup["kind"] = "setup";
    setup["n"] = n;
    setup["d"] = X.cols();
    setup["terms"] = ing.terms;
    setup["linkage_blocks"] = linkage.num_blocks();
    Json ks = Json::array();
    for (const auto& b : variants) ks.push_back(b.num_blocks());
    setup["variant_blocks"] = ks;
    setup["oracle_deviance"] = encode_number(oracle_dev);
    setup["intercept_only_deviance"] = encode_number(null_dev);
    setup["prefactors"] = prefactors;
    lines.push_back(setup);

    struct Agg {
        double mean = 0, m2 = 0;
        int count = 0, na = 0;
    };
    std::map<std::tuple<std::string, int, std::string>, Agg> agg;
    std::vector<std::tuple<std::string, int, std::string>> order;
    for (int r = 0; r < cs.replications; ++r) {
        for (const auto& c : per_rep[static_cast<std::size_t>(r)]) {
            Json j;
            j["schema_version"] = kSchemaVersion;
            j["kind"] = "casestudy";
            j["replication"] = r;
            j["realized_mismatch_fraction"] = encode_number(realized[static_cast<std::size_t>(r)]);
            j["method"] = c.method;
            j["variant"] = c.variant >= 0 ? Json(c.variant) : Json(nullptr);
            j["selection"] = c.selection.empty() ? Json(nullptr) : Json(c.selection);
            j["lambda"] = encode_number(c.lambda);
            j["prefactor"] = encode_number(c.prefactor);
            j["deviance"] = encode_number(c.deviance);
            j["converged"] = c.converged;
            j["na"] = c.na;
            lines.push_back(j);
            const auto key = std::make_tuple(c.method, c.variant, c.selection);
            if (!agg.count(key)) order.push_back(key);
            auto& a = agg[key];
            if (c.na || !std::isfinite(c.deviance)) {
                ++a.na;
            } else {
                ++a.count;
                const double delta = c.deviance - a.mean;
                a.mean += delta / a.count;
                a.m2 += delta * (c.deviance - a.mean);
            }
        }
    }
    {
        auto out = open_output(dir / "records.ndtext");
        write_lines(out, lines);
    }
    auto out = open_output(dir / "summary.tsv");
    out << "schema_version\tmethod\tvariant\tblocks\tselection\tn\tna\tmean_deviance\tse_deviance\n";
    auto num = [](double v) {
        if (!std::isfinite(v)) return std::string("NA");
        std::ostringstream os;
        os.precision(10);
        os << v;
        return os.str();
    };
    for (const auto& key : order) {
        const auto& a = agg[key];
        const auto& [method, v, sel] = key;
        const double m = a.count > 0 ? a.mean : kNaN;
        const double se = a.count > 1 ? std::sqrt(a.m2 / (a.count - 1) / a.count) : kNaN;
        out << kSchemaVersion << '\t' << method << '\t' << (v >= 0 ? std::to_string(v) : "NA") << '\t'
            << (v >= 0 ? std::to_string(variants[static_cast<std::size_t>(v)].num_blocks()) : "NA") << '\t'
            << (sel.empty() ? "NA" : sel) << '\t' << a.count << '\t' << a.na << '\t' << num(m) << '\t' << num(se) << '\n';
    }
    out << kSchemaVersion << "\tintercept_only\tNA\tNA\tNA\t1\t0\t" << num(null_dev) << "\tNA\n";
    double mean_k = 0;
    for (double v : realized) mean_k += v;
    out << kSchemaVersion << "\tmean_mismatch_fraction\tNA\t" << linkage.num_blocks() << "\tNA\t" << cs.replications << "\t0\t"
        << num(mean_k / cs.replications) << "\tNA\n";
}

void run(const RunConfig& cfg)
{
    const fs::path dir = output_directory(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
    if (cfg.command == "simulate") run_simulate(cfg, dir);
    else if (cfg.command == "fit") run_fit(cfg, dir);
    else if (cfg.command == "recover") run_recover(cfg, dir);
    else if (cfg.command == "casestudy") run_casestudy(cfg, dir);
    else throw ConfigError("command", "no command given");
    write_resolved(cfg, dir);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Penalized GLM regression for linked files with mismatch error"};
    app.require_subcommand(1);
    struct Flags {
        std::string config;
        std::string out;
        std::optional<std::uint64_t> seed;
        std::optional<int> threads;
        std::optional<int> replications;
        std::optional<double> lambda;
        std::vector<std::string> methods;
        bool timings = false;
    } flags;
    for (const char* name : {"simulate", "fit", "recover", "casestudy"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("-c,--config", flags.config, "configuration file")->required();
        sub->add_option("-o,--out", flags.out, "output directory");
        sub->add_option("--seed", flags.seed, "random seed");
        sub->add_option("--threads", flags.threads, "worker threads (0: all cores)");
        sub->add_flag("--timings", flags.timings, "record per-fit runtimes");
        if (std::string(name) == "simulate" || std::string(name) == "casestudy")
            sub->add_option("--replications", flags.replications, "number of replications");
        if (std::string(name) == "fit" || std::string(name) == "recover")
            sub->add_option("--lambda", flags.lambda, "fixed penalty level");
        if (std::string(name) == "fit") sub->add_option("--methods", flags.methods, "methods to fit");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg = load_config(flags.config);
        if (!cfg.command.empty() && cfg.command != command)
            throw ConfigError("command", "configuration is for '" + cfg.command + "', not '" + command + "'");
        cfg.command = command;
        if (!flags.out.empty()) cfg.output.directory = flags.out;
        if (flags.timings) cfg.output.timings = true;
        if (flags.seed) cfg.seed = *flags.seed;
        if (flags.threads) {
            if (*flags.threads < 0) throw ConfigError("threads", "must be non-negative");
            cfg.threads = *flags.threads;
        }
        if (flags.lambda) {
            if (!(*flags.lambda >= 0.0)) throw ConfigError("method.lambda", "must be non-negative");
            cfg.method.lambda = *flags.lambda;
        }
        if (!flags.methods.empty()) {
            for (const auto& m : flags.methods) {
                try {
                    sim::parse_method(m);
                } catch (const std::exception& e) {
                    throw ConfigError("method.methods", e.what());
                }
            }
            cfg.method.methods = flags.methods;
        }
        if (cfg.simulation) {
            cfg.simulation->seed = cfg.seed;
            cfg.simulation->threads = cfg.threads;
            if (flags.replications) {
                if (*flags.replications < 1) throw ConfigError("simulation.replications", "must be positive");
                cfg.simulation->replications = *flags.replications;
            }
        }
        if (cfg.casestudy && flags.replications) {
            if (*flags.replications < 1) throw ConfigError("casestudy.replications", "must be positive");
            cfg.casestudy->replications = *flags.replications;
        }
        run(cfg);
        out << "wrote results to " << output_directory(cfg).string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidInput& e) {
        err << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DomainError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
}

} // namespace linkglm::cli
