#include "countfx/control_function.hpp"
#include "countfx/dgp.hpp"
#include "countfx/errors.hpp"
#include "countfx/experiment.hpp"
#include "countfx/matching.hpp"
#include "countfx/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace countfx;
using nlohmann::json;

namespace {

enum Exit : int {
    kOk = 0,
    kUsage = 2,
    kData = 3,
    kFit = 4,
    kOrchestration = 5,
    kReport = 6,
    kDomain = 7,
    kOther = 1,
};

// I/O failures count as input-data problems.
class FileError : public Error {
public:
    using Error::Error;
};

class OrchestrationError : public Error {
public:
    using Error::Error;
};

struct Globals {
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const std::string& path) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FileError(path + ": not a valid JSON document (" + e.what() + ")");
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot write " + path);
    out << text;
    if (!out) throw FileError("write failed: " + path);
}

std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

// "<dir>/panel.csv" -> "<dir>/panel<suffix>".
std::string sidecar(const std::string& path, const std::string& suffix) {
    fs::path p(path);
    if (p.extension() == ".csv") p.replace_extension();
    return p.string() + suffix;
}

void emit(const std::optional<std::string>& out, const std::string& text) {
    if (out) write_text(*out, text);
    else std::cout << text;
}

Schema load_schema(const std::string& data_path, const std::optional<std::string>& schema_path) {
    if (schema_path) return Schema::from_json(read_json(*schema_path));
    const std::string guess = sidecar(data_path, ".schema.json");
    if (fs::exists(guess)) return Schema::from_json(read_json(guess));
    return dgp_schema(DGPConfig::defaults());
}

PanelDataset load_panel(const std::string& data_path, const std::optional<std::string>& schema_path, bool quiet) {
    if (!fs::exists(data_path)) throw FileError("no such file: " + data_path);
    IngestResult r = ingest_file(data_path, load_schema(data_path, schema_path));
    if (!quiet)
        for (const auto& issue : r.rejected)
            std::cerr << "warning: line " << issue.line << " rejected: " << issue.message << "\n";
    return std::move(r.data);
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
    std::optional<std::string> config;
    std::string out;
    std::uint64_t rep = 0;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g) {
    DGPConfig cfg = a.config ? load_experiment_config(read_json(*a.config)).dgp : DGPConfig::defaults();
    if (g.seed) cfg.seed = *g.seed;
    cfg.validate();
    const SimulatedPanel panel = simulate_panel(cfg, a.rep);

    std::ostringstream data, truth;
    emit_table(panel.data, data);
    emit_truth(panel, truth);
    write_text(a.out, data.str());
    write_text(sidecar(a.out, ".truth.csv"), truth.str());
    write_text(sidecar(a.out, ".schema.json"), dump(panel.data.schema().to_json()));
    if (!g.quiet)
        std::cout << "wrote " << panel.data.rows() << " rows (" << panel.data.n_persons() << " persons) to " << a.out
                  << "\n";
    return kOk;
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::optional<std::string> schema;
    std::string family = "nb2";
    std::string strategy = "s5";
    bool poisson_limit = false;
    bool no_dispersion = false;
    bool stability = false;
    std::vector<std::string> squares;
    std::optional<std::string> out;
};

int cmd_fit(const FitArgs& a, const Globals& g) {
    const PanelDataset data = load_panel(a.data, a.schema, g.quiet);
    PipelineOptions opts;
    opts.spec = StrategySpec{strategy_from_string(a.strategy), count_kind_from_string(a.family), a.poisson_limit};
    opts.model.first_stage_squares = a.squares;
    opts.dispersion_test = !a.no_dispersion;
    opts.stability_check = a.stability;
    const PipelineResult res = run_2sri_pipeline(data, opts);
    emit(a.out, dump(res.to_json()));
    if (!g.quiet && a.out) {
        std::cout << a.strategy << " " << res.main.model << ": " << res.main.n_obs << " rows, log-likelihood "
                  << res.main.loglik << (res.main.converged ? "" : " (not converged)") << "\n";
        for (const auto& w : res.main.warnings) std::cerr << "warning: " << w << "\n";
    }
    return kOk;
}

// --- psm --------------------------------------------------------------------

struct PsmArgs {
    std::string data;
    std::optional<std::string> schema;
    std::string link = "probit";
    std::size_t impute_k = 5;
    std::optional<std::string> out;
};

int cmd_psm(const PsmArgs& a, const Globals& g) {
    const PanelDataset data = load_panel(a.data, a.schema, g.quiet);
    PsmOptions opts;
    opts.link = binary_link_from_string(a.link);
    opts.impute_k = a.impute_k;
    const MatchResult m = run_psm(data, opts);
    if (a.out) write_text(*a.out, dump(m.to_json()));
    std::cout << format_psm_line(m.ate, m.p_value) << "\n";
    if (!g.quiet)
        std::cout << m.pairs.size() << " matched pairs, " << m.n_imputed << " imputed scores, " << m.unmatched.size()
                  << " unmatched\n";
    return kOk;
}

// --- montecarlo -------------------------------------------------------------

struct MonteCarloArgs {
    std::optional<std::string> config;
    std::optional<int> reps;
    int jobs = 1;
    std::optional<std::string> out;
    bool dispersion = false;
    bool stability = false;
    bool no_psm = false;
};

int cmd_montecarlo(const MonteCarloArgs& a, const Globals& g) {
    ExperimentConfig c = a.config ? load_experiment_config(read_json(*a.config)) : ExperimentConfig{DGPConfig::defaults(), {}};
    if (g.seed) c.dgp.seed = *g.seed;
    if (a.reps) c.options.reps = *a.reps;
    c.options.jobs = a.jobs;
    if (a.dispersion) c.options.dispersion_test = true;
    if (a.stability) c.options.stability_check = true;
    if (a.no_psm) c.options.psm = false;
    c.dgp.validate();

    ExperimentReport rep;
    try {
        rep = run_experiment(c.dgp, c.options);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw OrchestrationError(std::string("experiment aborted: ") + e.what());
    }
    emit(a.out, dump(rep.to_json()));
    if (!g.quiet)
        std::cerr << rep.replications << " replications, " << rep.failures << " failed\n";
    if (rep.failures == rep.replications)
        throw OrchestrationError("every replication failed; first: " +
                                 (rep.failure_messages.empty() ? std::string("?") : rep.failure_messages.front()));
    return kOk;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> docs;
    std::string style;
    std::optional<std::string> out;
};

int cmd_report(const ReportArgs& a, const Globals&) {
    const TableStyle style = table_style_from_string(a.style);
    std::vector<json> docs;
    for (const auto& path : a.docs) {
        const std::string text = read_text(path);
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ReportError(path + ": empty document");
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ReportError(path + ": not a valid JSON document (" + e.what() + ")");
        }
        if (doc.is_array()) {
            for (auto& d : doc) docs.push_back(std::move(d));
            if (doc.empty()) throw ReportError(path + ": empty document");
        } else {
            docs.push_back(std::move(doc));
        }
    }
    emit(a.out, render(style, docs));
    return kOk;
}

int exit_code_for(const std::exception& e) {
    if (const auto* s = dynamic_cast<const StageError*>(&e)) {
        switch (s->cause()) {
            case StageError::Cause::data: return kData;
            case StageError::Cause::domain: return kDomain;
            case StageError::Cause::fit: return kFit;
            case StageError::Cause::other: return kFit;
        }
    }
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
        dynamic_cast<const DataError*>(&e) || dynamic_cast<const DegenerateSampleError*>(&e) ||
        dynamic_cast<const FileError*>(&e))
        return kData;
    if (dynamic_cast<const OptimizationError*>(&e) || dynamic_cast<const SeparationError*>(&e) ||
        dynamic_cast<const SingularMatrixError*>(&e) || dynamic_cast<const NestingError*>(&e) ||
        dynamic_cast<const UnsupportedLinkError*>(&e))
        return kFit;
    if (dynamic_cast<const OrchestrationError*>(&e)) return kOrchestration;
    if (dynamic_cast<const ReportError*>(&e)) return kReport;
    if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const ParameterError*>(&e)) return kDomain;
    return kOther;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Count-data treatment effect models: simulate, fit, match, Monte Carlo and tables"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Override the simulator seed");
    app.add_flag("--quiet", g.quiet, "Only print requested output");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Draw a synthetic panel with its truth sidecar");
    simulate->add_option("config", sim.config, "Simulator config (JSON); defaults when omitted")->check(CLI::ExistingFile);
    simulate->add_option("--out", sim.out, "Panel CSV path")->required();
    simulate->add_option("--rep", sim.rep, "Replication index");

    FitArgs fit;
    auto* fitc = app.add_subcommand("fit", "Run first stages and a count model on a panel");
    fitc->add_option("data", fit.data, "Panel CSV")->required();
    fitc->add_option("--schema", fit.schema, "Schema JSON (default: <data>.schema.json)");
    fitc->add_option("--family", fit.family, "Count family")->check(CLI::IsMember({"poisson", "nb2", "zinb", "ztnb"}));
    fitc->add_option("--strategy", fit.strategy, "Estimation strategy")->check(CLI::IsMember({"s1", "s2", "s3", "s4", "s5"}));
    fitc->add_flag("--poisson-limit", fit.poisson_limit, "Fix alpha at 0 (ZIP / ZTP)");
    fitc->add_flag("--no-dispersion", fit.no_dispersion, "Skip the dispersion LR test");
    fitc->add_flag("--stability", fit.stability, "Add the time-interaction stability check");
    fitc->add_option("--square", fit.squares, "Covariate entering the first stages with its square");
    fitc->add_option("--out", fit.out, "Result document path (default: stdout)");

    PsmArgs psm;
    auto* psmc = app.add_subcommand("psm", "Propensity score matching estimate of the ATE");
    psmc->add_option("data", psm.data, "Panel CSV")->required();
    psmc->add_option("--schema", psm.schema, "Schema JSON (default: <data>.schema.json)");
    psmc->add_option("--psm-link", psm.link, "Propensity link")->check(CLI::IsMember({"probit", "logit"}));
    psmc->add_option("--impute-k", psm.impute_k, "Neighbours averaged for a missing score")->check(CLI::PositiveNumber);
    psmc->add_option("--out", psm.out, "Result document path");

    MonteCarloArgs mc;
    auto* mcc = app.add_subcommand("montecarlo", "Replicated simulate/fit/match experiment");
    mcc->add_option("config", mc.config, "Experiment config (JSON); defaults when omitted")->check(CLI::ExistingFile);
    mcc->add_option("--reps", mc.reps, "Replications")->check(CLI::PositiveNumber);
    mcc->add_option("--jobs", mc.jobs, "Worker threads")->check(CLI::PositiveNumber);
    mcc->add_flag("--dispersion", mc.dispersion, "Run the dispersion LR test in every replication");
    mcc->add_flag("--stability", mc.stability, "Run the stability check in every replication");
    mcc->add_flag("--no-psm", mc.no_psm, "Skip matching");
    mcc->add_option("--out", mc.out, "Report path (default: stdout)");

    ReportArgs rep;
    auto* repc = app.add_subcommand("report", "Render result documents as a text table");
    repc->add_option("documents", rep.docs, "fit / psm / montecarlo documents")->required()->check(CLI::ExistingFile);
    repc->add_option("--style", rep.style, "Table layout")->required()->check(CLI::IsMember({"table3", "table4", "table5"}));
    repc->add_option("--out", rep.out, "Output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*simulate) return cmd_simulate(sim, g);
        if (*fitc) return cmd_fit(fit, g);
        if (*psmc) return cmd_psm(psm, g);
        if (*mcc) return cmd_montecarlo(mc, g);
        if (*repc) return cmd_report(rep, g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kUsage;
}
