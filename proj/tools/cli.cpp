#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "blochwalk/dataset.hpp"
#include "blochwalk/diffusion_kernel.hpp"
#include "blochwalk/errors.hpp"
#include "blochwalk/inference.hpp"
#include "blochwalk/simulate.hpp"
#include "blochwalk/two_scale.hpp"

namespace blochwalk::cli {

using nlohmann::ordered_json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

namespace {

struct Rates {
    double d_ini = 0.0;
    double d_n = 0.0;
    double d_q = 0.0;

    DiffusionRates get() const { return {d_ini, d_n, d_q}; }
};

void add_rates(CLI::App* sub, Rates& r) {
    sub->add_option("--dini", r.d_ini, "initial diffusion, rad^2")->check(CLI::NonNegativeNumber);
    sub->add_option("--dn", r.d_n, "individual diffusion per gate, rad^2")->check(CLI::NonNegativeNumber);
    sub->add_option("--dq", r.d_q, "pool diffusion per gate, rad^2")->check(CLI::NonNegativeNumber);
}

std::vector<GateCount> gate_range(GateCount gates_max, GateCount step, GateCount start) {
    if (step == 0) throw UsageError("--step must be >= 1");
    std::vector<GateCount> out;
    for (GateCount g = start; g <= gates_max; g += step) out.push_back(g);
    return out;
}

// Primary output: a file, or the caller's stream for "-".
class Output {
public:
    Output(const std::string& path, std::ostream& fallback) : path_(path) {
        if (path == "-") {
            stream_ = &fallback;
        } else {
            const auto parent = std::filesystem::path(path).parent_path();
            if (!parent.empty()) std::filesystem::create_directories(parent);
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw std::runtime_error("cannot open output file '" + path + "'");
            stream_ = file_.get();
        }
    }

    std::ostream& stream() { return *stream_; }

    std::string manifest_path() const {
        return path_ == "-" ? std::string(kStdoutManifest) : path_ + ".manifest.json";
    }

private:
    std::string path_;
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_ = nullptr;
};

void write_json(const std::string& path, const ordered_json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file '" + path + "'");
    f << j.dump(2) << '\n';
}

ordered_json config_snapshot(const CLI::App* sub) {
    ordered_json config = ordered_json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string& name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
        if (name == "help" || name.empty()) continue;
        if (opt->count() > 0) {
            const auto& results = opt->results();
            config[name] = results.size() == 1 ? ordered_json(results.front()) : ordered_json(results);
        } else if (!opt->get_default_str().empty()) {
            config[name] = opt->get_default_str();
        }
    }
    return config;
}

ordered_json summary_json(const RateSummary& s) {
    return {{"mean", s.mean}, {"sd", s.sd}, {"p05", s.p05}, {"p50", s.p50}, {"p95", s.p95}};
}

ordered_json rates_json(const DiffusionRates& r) { return {{"d_ini", r.d_ini}, {"d_n", r.d_n}, {"d_q", r.d_q}}; }

// ---- pdf ----

void run_pdf(const Rates& rates, const std::vector<GateCount>& gates, int grid, std::ostream& os) {
    if (grid < 2) throw UsageError("--grid must be >= 2");
    const DiffusionRates r = rates.get();
    const SeriesConfig cfg;
    os << "gates,p,prob_pdf,pool_pdf\n";
    for (GateCount g : gates) {
        const double total = binomial_exposure(r, g).value() + pool_exposure(r, g).value();
        std::optional<LegendreSeries> single;
        if (total > kDegenerateThreshold) single.emplace(DiffusionExposure(total), cfg);
        for (int i = 0; i < grid; ++i) {
            const double p = static_cast<double>(i) / static_cast<double>(grid - 1);
            os << g << ',' << format_double(p) << ',';
            if (single) os << format_double(single->density_sum(2.0 * p - 1.0));
            os << ',';
            try {
                os << format_double(pool_pdf(Probability(p), r, g, cfg));
            } catch (const DegenerateDistribution&) {
            }
            os << '\n';
        }
    }
}

// ---- moments ----

void run_moments(const Rates& rates, GateCount gates_max, GateCount step, std::ostream& os) {
    os << "gates,exposure,mean,second_raw,variance\n";
    for (GateCount g : gate_range(gates_max, step, 0)) {
        const DiffusionExposure tau = binomial_exposure(rates.get(), g);
        const MomentSet m = moments(tau);
        os << g << ',' << format_double(tau.value()) << ',' << format_double(m.mean.value()) << ','
           << format_double(m.second_raw) << ',' << format_double(m.variance) << '\n';
    }
}

// ---- bounds ----

void run_bounds(const Rates& rates, GateCount gates_max, GateCount step, const std::vector<double>& levels,
                std::uint64_t seed, std::ostream& os) {
    for (double a : levels) {
        if (!(a > 0.0 && a < 1.0)) throw UsageError("--levels must lie strictly between 0 and 1");
    }
    const BandCurve curve = band_curve(rates.get(), gate_range(gates_max, step, 0), levels, SeriesConfig{}, seed);
    os << "gates,lower,upper,pool_mean";
    for (double a : levels) {
        char buf[32];
        os << ",p" << std::string_view(buf, std::to_chars(buf, buf + sizeof buf, a).ptr - buf);
    }
    os << ",sampled\n";
    for (const BandPoint& b : curve) {
        os << b.gates << ',' << format_double(b.lower.value()) << ',' << format_double(b.upper.value()) << ','
           << format_double(b.pool_mean.value());
        for (const auto& [level, value] : b.percentiles) os << ',' << format_double(value.value());
        os << ',' << (b.sampled ? 1 : 0) << '\n';
    }
}

// ---- simulate ----

void write_draws(const std::vector<FrequencyDraw>& draws, std::ostream& os) {
    os << "pool,gates,shots,zeros,observed_freq,true_pool_prob,pool_angle\n";
    for (const FrequencyDraw& d : draws) {
        os << d.pool << ',' << d.gate_count << ',' << d.shots << ',' << d.zeros << ','
           << format_double(d.observed_freq.value()) << ',' << format_double(d.true_pool_prob.value()) << ','
           << format_double(d.pool_angle.value()) << '\n';
    }
}

// ---- fit / report ----

void write_chain(const Chain& chain, std::size_t n_records, std::ostream& os) {
    os << "iteration,d_ini,d_n,d_q,log_likelihood,log_post";
    for (std::size_t q = 0; q < n_records; ++q) os << ",theta_" << q;
    os << '\n';
    for (const PosteriorSample& s : chain.samples) {
        os << s.iteration << ',' << format_double(s.rates.d_ini) << ',' << format_double(s.rates.d_n) << ','
           << format_double(s.rates.d_q) << ',' << format_double(s.log_likelihood) << ','
           << format_double(s.log_post);
        for (double t : s.hidden_thetas) os << ',' << format_double(t);
        os << '\n';
    }
}

ordered_json report_json(const FitReport& r) {
    ordered_json j;
    j["n_records"] = r.n_records;
    j["n_samples"] = r.n_samples;
    j["posterior"] = {{"d_ini", summary_json(r.d_ini)}, {"d_n", summary_json(r.d_n)}, {"d_q", summary_json(r.d_q)}};
    j["map"] = {{"rates", rates_json(r.map_rates)}, {"log_post", r.map_log_post}};
    j["single_level_rates"] = rates_json(r.single_level_rates);
    j["max_loglik_two_level"] = r.max_loglik_two_level;
    j["max_loglik_single_level"] = r.max_loglik_single_level;
    j["log_likelihood_ratio"] = r.log_likelihood_ratio;
    j["max_joint_loglik_two_level"] = r.max_joint_loglik_two_level;
    j["rate_acceptance"] = r.rate_acceptance;
    j["theta_acceptance"] = r.theta_acceptance;
    return j;
}

double parse_cell(const std::string& text, const std::string& where) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError(where + ": not a number: '" + text + "'");
    }
    return v;
}

ordered_json summarize_chain_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open chain file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty chain file");
    std::vector<std::string> header;
    for (std::stringstream ss(line); std::getline(ss, line, ',');) header.push_back(line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(path + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_ini = column("d_ini"), c_n = column("d_n"), c_q = column("d_q");
    const std::size_t c_post = column("log_post"), c_iter = column("iteration");
    std::vector<double> d_ini, d_n, d_q;
    double best_post = -std::numeric_limits<double>::infinity();
    double best_iter = -1.0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        for (std::stringstream ss(line); std::getline(ss, cell, ',');) cells.push_back(cell);
        const std::string where = path + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) throw DataError(where + ": wrong number of fields");
        d_ini.push_back(parse_cell(cells[c_ini], where));
        d_n.push_back(parse_cell(cells[c_n], where));
        d_q.push_back(parse_cell(cells[c_q], where));
        const double post = parse_cell(cells[c_post], where);
        if (post > best_post) {
            best_post = post;
            best_iter = parse_cell(cells[c_iter], where);
        }
    }
    ordered_json j;
    j["n_samples"] = d_ini.size();
    j["posterior"] = {{"d_ini", summary_json(summarize(d_ini))},
                      {"d_n", summary_json(summarize(d_n))},
                      {"d_q", summary_json(summarize(d_q))}};
    if (!d_ini.empty()) {
        j["best_sample"] = {{"iteration", static_cast<std::int64_t>(best_iter)}, {"log_post", best_post}};
    }
    return j;
}

ordered_json manifest_json(const std::string& command, const std::vector<std::string>& args, const CLI::App* sub,
                           std::optional<std::uint64_t> seed, const std::vector<std::string>& outputs) {
    ordered_json m;
    m["command"] = command;
    m["argv"] = args;
    m["config"] = config_snapshot(sub);
    m["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    m["version"] = kVersion;
    m["outputs"] = outputs;
    return m;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
    CLI::App app{"Two-scale Bloch-sphere random-walk noise model", "blochwalk"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string out_path = "-";
    Rates rates;
    std::vector<GateCount> gates;
    GateCount gates_max = 0;
    GateCount step = 1;
    int grid = 201;
    std::vector<double> levels{0.05, 0.25, 0.5, 0.75, 0.95};
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string format = "draws";
    std::int64_t pools = 1;
    std::int64_t shots = 8192;
    std::optional<double> coherent_fraction;
    std::optional<double> over_rotation;
    std::string data_path;
    std::string out_dir = "fit_output";
    std::int64_t iters = 1'000'000;
    std::int64_t burn_in = 100'000;
    std::int64_t thin = 20;
    double rate_step = 0.05;
    double theta_step = 0.05;
    std::string chain_path;
    std::string manifest_path;

    auto* pdf = app.add_subcommand("pdf", "prob_pdf and pool_pdf on a probability grid");
    add_rates(pdf, rates);
    pdf->add_option("--gates", gates, "gate counts")->required()->delimiter(',');
    pdf->add_option("--grid", grid, "grid points on [0, 1]")->capture_default_str();
    pdf->add_option("--out", out_path, "output CSV, - for stdout")->capture_default_str();

    auto* mom = app.add_subcommand("moments", "mean and variance of P against gate count");
    mom->add_option("--dini", rates.d_ini, "initial diffusion, rad^2")->check(CLI::NonNegativeNumber);
    mom->add_option("--dn", rates.d_n, "diffusion per gate, rad^2")->required()->check(CLI::NonNegativeNumber);
    mom->add_option("--gates-max", gates_max)->required();
    mom->add_option("--step", step, "gate stride")->capture_default_str();
    mom->add_option("--out", out_path, "output CSV, - for stdout")->capture_default_str();

    auto* bnd = app.add_subcommand("bounds", "bounds, pool mean and percentile band");
    add_rates(bnd, rates);
    bnd->add_option("--gates-max", gates_max)->required();
    bnd->add_option("--step", step, "gate stride")->capture_default_str();
    bnd->add_option("--levels", levels, "percentile levels")->delimiter(',');
    bnd->add_option("--seed", seed, "seed for the sampling fallback (default 0)");
    bnd->add_option("--out", out_path, "output CSV, - for stdout")->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "forward simulation of pool readout frequencies");
    add_rates(sim, rates);
    sim->add_option("--mode", mode)->required()->check(CLI::IsMember({"stepwise", "distributional"}));
    sim->add_option("--pools", pools, "number of pools")->capture_default_str()->check(CLI::PositiveNumber);
    sim->add_option("--shots", shots, "shots per pool")->capture_default_str()->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed)->required();
    auto* sim_gates = sim->add_option("--gates", gates, "gate counts")->delimiter(',');
    auto* sim_max = sim->add_option("--gates-max", gates_max, "gate counts step, 2 step, ..., gates-max");
    sim->add_option("--step", step, "gate stride")->capture_default_str();
    sim_gates->excludes(sim_max);
    sim->add_option("--coherent-fraction", coherent_fraction)->check(CLI::Range(0.0, 1.0));
    sim->add_option("--over-rotation", over_rotation, "rad per gate");
    sim->add_option("--format", format, "draws table or fit-ready dataset")
        ->capture_default_str()
        ->check(CLI::IsMember({"draws", "dataset"}));
    sim->add_option("--out", out_path, "output CSV, - for stdout")->capture_default_str();

    auto* fit_cmd = app.add_subcommand("fit", "MCMC fit of the three rates");
    fit_cmd->add_option("--data", data_path)->required();
    fit_cmd->add_option("--iters", iters, "post burn-in iterations")->capture_default_str();
    fit_cmd->add_option("--burn-in", burn_in, "")->capture_default_str();
    fit_cmd->add_option("--thin", thin, "")->capture_default_str();
    fit_cmd->add_option("--seed", seed)->required();
    fit_cmd->add_option("--rate-step", rate_step, "initial log-rate proposal sd")->capture_default_str();
    fit_cmd->add_option("--theta-step", theta_step, "initial angle proposal sd")->capture_default_str();
    fit_cmd->add_option("--out-dir", out_dir, "directory for chain.csv, fit_report.json, manifest.json")->capture_default_str();

    auto* rep = app.add_subcommand("report", "posterior summary of a chain CSV");
    rep->add_option("--chain", chain_path)->required();
    rep->add_option("--out", out_path, "output JSON, - for stdout")->capture_default_str();

    auto* rerun = app.add_subcommand("rerun", "repeat the run recorded in a manifest");
    rerun->add_option("--manifest", manifest_path)->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*rerun) {
            if (depth > 0) throw UsageError("a manifest cannot itself call rerun");
            std::ifstream in(manifest_path);
            if (!in) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
            const ordered_json m = ordered_json::parse(in);
            if (m.value("version", "") != kVersion) {
                err << "warning: manifest written by version " << m.value("version", "?") << ", running " << kVersion
                    << '\n';
            }
            return dispatch(m.at("argv").get<std::vector<std::string>>(), out, err, depth + 1);
        }

        if (*fit_cmd) {
            const PoolDataset data = parse_dataset(data_path);
            ChainConfig cfg;
            cfg.total_iterations = iters;
            cfg.burn_in = burn_in;
            cfg.thin = thin;
            cfg.seed = *seed;
            cfg.rate_step = rate_step;
            cfg.theta_step = theta_step;
            try {
                cfg.validate();
            } catch (const DomainError& e) {
                throw UsageError(e.what());
            }
            const Fit result = fit(data, cfg);
            std::filesystem::create_directories(out_dir);
            const std::string chain_file = (std::filesystem::path(out_dir) / "chain.csv").string();
            const std::string report_file = (std::filesystem::path(out_dir) / "fit_report.json").string();
            const std::string manifest_file = (std::filesystem::path(out_dir) / "manifest.json").string();
            {
                std::ofstream f(chain_file, std::ios::binary);
                if (!f) throw std::runtime_error("cannot open output file '" + chain_file + "'");
                write_chain(result.chain, data.size(), f);
            }
            write_json(report_file, report_json(result.report));
            write_json(manifest_file, manifest_json("fit", args, fit_cmd, seed, {chain_file, report_file}));
            return 0;
        }

        CLI::App* sub = nullptr;
        std::string command;
        std::optional<std::uint64_t> manifest_seed = seed;
        std::ostringstream body;
        if (*pdf) {
            sub = pdf;
            command = "pdf";
            run_pdf(rates, gates, grid, body);
        } else if (*mom) {
            sub = mom;
            command = "moments";
            run_moments(rates, gates_max, step, body);
        } else if (*bnd) {
            sub = bnd;
            command = "bounds";
            manifest_seed = seed.value_or(0);
            run_bounds(rates, gates_max, step, levels, *manifest_seed, body);
        } else if (*sim) {
            sub = sim;
            command = "simulate";
            const bool coherent = coherent_fraction.has_value() || over_rotation.has_value();
            if (coherent && mode == "distributional") {
                throw UsageError("--coherent-fraction/--over-rotation need --mode stepwise");
            }
            if (gates.empty()) {
                if (sim_max->count() == 0) throw UsageError("simulate needs --gates or --gates-max");
                gates = gate_range(gates_max, step, step);
            }
            SimConfig cfg;
            cfg.rates = rates.get();
            cfg.gates = gates;
            cfg.n_shots = shots;
            cfg.m_pools = pools;
            cfg.seed = *seed;
            cfg.mode = mode == "stepwise" ? SimMode::kStepwise : SimMode::kDistributional;
            try {
                cfg.validate();
            } catch (const DomainError& e) {
                throw UsageError(e.what());
            }
            std::vector<FrequencyDraw> draws;
            if (coherent) {
                const CoherentErrorConfig ce{coherent_fraction.value_or(1.0), over_rotation.value_or(0.0)};
                for (auto& run : resample_runs(cfg, ce)) {
                    draws.insert(draws.end(), run.points.begin(), run.points.end());
                }
            } else if (cfg.mode == SimMode::kStepwise) {
                draws = simulate_stepwise(cfg);
            } else {
                draws = simulate_distributional(cfg);
            }
            if (format == "dataset") {
                PoolDataset data;
                for (const FrequencyDraw& d : draws) data.records.push_back({d.gate_count, d.shots, d.zeros, {}});
                write_dataset(body, data);
            } else {
                write_draws(draws, body);
            }
        } else if (*rep) {
            sub = rep;
            command = "report";
            body << summarize_chain_file(chain_path).dump(2) << '\n';
        }

        Output output(out_path, out);
        output.stream() << body.str();
        output.stream().flush();
        const std::vector<std::string> outputs{out_path == "-" ? std::string("<stdout>") : out_path};
        write_json(output.manifest_path(), manifest_json(command, args, sub, manifest_seed, outputs));
        return 0;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return dispatch(args, out, err, 0);
}

}  // namespace blochwalk::cli
