#include "countfx/report.hpp"

#include "countfx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

namespace countfx {

namespace {

using nlohmann::json;

struct Row {
    std::string label;
    std::vector<std::string> cells;
};

// Rows grouped into blocks; blocks are separated by rules.
struct Table {
    std::string title;
    std::vector<std::vector<std::string>> header;
    std::vector<std::vector<Row>> blocks;
    std::string note;
};

std::string render_table(const Table& t) {
    std::size_t ncol = 0;
    for (const auto& h : t.header) ncol = std::max(ncol, h.size());
    std::size_t label_w = 0;
    std::vector<std::size_t> w(ncol, 8);
    for (const auto& h : t.header)
        for (std::size_t j = 0; j < h.size(); ++j) w[j] = std::max(w[j], h[j].size());
    for (const auto& b : t.blocks)
        for (const auto& r : b) {
            label_w = std::max(label_w, r.label.size());
            for (std::size_t j = 0; j < r.cells.size() && j < ncol; ++j) w[j] = std::max(w[j], r.cells[j].size());
        }
    std::size_t total = label_w;
    for (auto x : w) total += 2 + x;
    const std::string rule(total, '-');

    std::ostringstream out;
    auto line = [&](const std::string& label, const std::vector<std::string>& cells) {
        std::string s = label;
        s.resize(label_w, ' ');
        for (std::size_t j = 0; j < ncol; ++j) {
            const std::string c = j < cells.size() ? cells[j] : "";
            s += "  ";
            s += std::string(w[j] - c.size(), ' ');
            s += c;
        }
        while (!s.empty() && s.back() == ' ') s.pop_back();
        out << s << '\n';
    };
    if (!t.title.empty()) out << t.title << '\n';
    out << rule << '\n';
    for (const auto& h : t.header) line("", h);
    for (const auto& b : t.blocks) {
        out << rule << '\n';
        for (const auto& r : b) line(r.label, r.cells);
    }
    out << rule << '\n';
    if (!t.note.empty()) out << t.note << '\n';
    return out.str();
}

std::string fixed(double v, int decimals) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    // "-0.000" reads as a sign error in a table.
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

std::string paren(const std::string& s) { return "(" + s + ")"; }

std::string abs_z(const json& z) {
    if (z.is_null()) return "";
    return paren(fixed(std::abs(z.get<double>()), 2));
}

const json& require(const json& doc, const char* key, const char* what) {
    if (!doc.is_object() || !doc.contains(key)) throw ReportError(std::string(what) + " lacks '" + key + "'");
    return doc.at(key);
}

std::string kind_of(const json& doc) {
    if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string())
        throw ReportError("document has no 'kind'");
    return doc["kind"].get<std::string>();
}

bool skip_in_irr(const std::string& name) {
    return name == "(Intercept)" || name == "log_alpha" || name.rfind("inflate:", 0) == 0;
}

// Ordered union of names over several columns, first appearance wins.
std::vector<std::string> union_names(const std::vector<std::vector<std::string>>& lists) {
    std::vector<std::string> out;
    for (const auto& l : lists)
        for (const auto& n : l)
            if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    return out;
}

struct Column {
    std::vector<std::string> names;
    std::map<std::string, std::pair<std::string, std::string>> cells;
};

Column irr_column(const json& pipeline) {
    Column c;
    const json& main = require(require(pipeline, "stages", "pipeline document"), "main", "pipeline stages");
    for (const auto& r : require(main, "irr", "main stage")) {
        const auto name = r.at("name").get<std::string>();
        if (skip_in_irr(name)) continue;
        c.names.push_back(name);
        c.cells[name] = {fixed(r.at("irr").get<double>(), 3), abs_z(r.at("z"))};
    }
    return c;
}

Column ame_column(const json& fit) {
    Column c;
    for (const auto& r : require(fit, "ame", "probit stage")) {
        const auto name = r.at("name").get<std::string>();
        c.names.push_back(name);
        c.cells[name] = {format_coef(r.at("ame").get<double>()), abs_z(r.at("z"))};
    }
    return c;
}

std::vector<Row> coefficient_block(const std::vector<Column>& cols) {
    std::vector<std::vector<std::string>> lists;
    for (const auto& c : cols) lists.push_back(c.names);
    std::vector<Row> rows;
    for (const auto& name : union_names(lists)) {
        Row est{name, {}};
        Row z{"", {}};
        for (const auto& c : cols) {
            auto it = c.cells.find(name);
            est.cells.push_back(it == c.cells.end() ? "" : it->second.first);
            z.cells.push_back(it == c.cells.end() ? "" : it->second.second);
        }
        rows.push_back(std::move(est));
        rows.push_back(std::move(z));
    }
    return rows;
}

std::string count_cell(const json& fit, const char* key) {
    if (!fit.contains(key) || fit[key].is_null()) return "";
    return format_count(fit[key].get<long long>());
}

std::vector<Row> count_block(const std::vector<const json*>& fits) {
    Row obs{"Number of observations", {}};
    Row persons{"Number of persons", {}};
    for (const auto* f : fits) {
        obs.cells.push_back(count_cell(*f, "n_obs"));
        persons.cells.push_back(count_cell(*f, "n_clusters"));
    }
    return {obs, persons};
}

std::optional<double> estimate_of(const json& fit, const std::string& name) {
    for (const auto& c : fit.at("coefficients"))
        if (c.at("name") == name) return c.at("estimate").get<double>();
    return std::nullopt;
}

std::vector<json> of_kind(const std::vector<json>& docs, const std::string& kind) {
    std::vector<json> out;
    for (const auto& d : docs)
        if (kind_of(d) == kind) out.push_back(d);
    return out;
}

const char* kNotePipeline =
    "Robust |z| statistics in parentheses; standard errors clustered by person. |z| >= 1.96 is significant at 5%.";

}  // namespace

std::string_view to_string(TableStyle style) {
    switch (style) {
        case TableStyle::table3: return "table3";
        case TableStyle::table4: return "table4";
        case TableStyle::table5: return "table5";
    }
    return "table3";
}

TableStyle table_style_from_string(std::string_view name) {
    if (name == "table3") return TableStyle::table3;
    if (name == "table4") return TableStyle::table4;
    if (name == "table5") return TableStyle::table5;
    throw ReportError("unknown table style '" + std::string(name) + "' (expected table3, table4 or table5)");
}

std::string format_coef(double v) {
    if (!std::isfinite(v)) return "NA";
    const double a = std::abs(v);
    if (a == 0.0 || a >= 0.001) return fixed(v, 3);
    const int decimals = std::min(12, static_cast<int>(-std::floor(std::log10(a))));
    return fixed(v, decimals);
}

std::string format_count(long long n) {
    std::string digits = std::to_string(n < 0 ? -n : n);
    std::string out;
    const int lead = static_cast<int>(digits.size()) % 3;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i != 0 && (static_cast<int>(i) - lead) % 3 == 0) out += ',';
        out += digits[i];
    }
    return n < 0 ? "-" + out : out;
}

std::string format_estimate_p(double estimate, double p_value) {
    return fixed(estimate, 3) + " " + paren(fixed(p_value, 3));
}

std::string format_psm_line(double ate, double p_value) {
    return "ATE " + fixed(ate, 3) + " (p " + fixed(p_value, 3) + ")";
}

std::string render_table3(const std::vector<json>& docs) {
    const json* doc = nullptr;
    for (const auto& d : docs) {
        if (kind_of(d) != "pipeline") throw ReportError("table3 expects pipeline documents, got '" + kind_of(d) + "'");
        const json& stages = require(d, "stages", "pipeline document");
        if (!doc && (stages.contains("treatment_probit") || stages.contains("selection_probit"))) doc = &d;
    }
    if (!doc) throw ReportError("table3 needs a pipeline document with first-stage probits (strategy s2 or higher)");
    const json& stages = (*doc)["stages"];

    Table t;
    t.title = "First-stage probit models: average marginal effects";
    std::vector<Column> cols;
    std::vector<const json*> fits;
    std::vector<std::string> numbers, heads;
    int k = 1;
    for (const auto& [key, head] : {std::pair{"treatment_probit", "T=1"}, std::pair{"selection_probit", "I=1"}}) {
        if (!stages.contains(key)) continue;
        cols.push_back(ame_column(stages[key]));
        fits.push_back(&stages[key]);
        numbers.push_back(paren(std::to_string(k++)));
        heads.push_back(head);
    }
    t.header = {numbers, heads};
    t.blocks.push_back(coefficient_block(cols));
    t.blocks.push_back(count_block(fits));
    t.note = kNotePipeline;
    return render_table(t);
}

std::string render_table4(const std::vector<json>& docs) {
    std::vector<json> pipelines;
    std::optional<json> psm;
    for (const auto& d : docs) {
        const auto kind = kind_of(d);
        if (kind == "pipeline") pipelines.push_back(d);
        else if (kind == "psm") psm = d;
        else throw ReportError("table4 expects pipeline and psm documents, got '" + kind + "'");
    }
    if (pipelines.empty()) throw ReportError("table4 needs at least one pipeline document");
    if (pipelines.size() > 3) throw ReportError("table4 takes at most three pipeline documents");

    Table t;
    t.title = "Count models (incidence rate ratios) and matching estimate";
    std::vector<Column> cols;
    std::vector<const json*> fits;
    std::vector<std::string> numbers, heads;
    for (std::size_t i = 0; i < pipelines.size(); ++i) {
        cols.push_back(irr_column(pipelines[i]));
        fits.push_back(&pipelines[i]["stages"]["main"]);
        numbers.push_back(paren(std::to_string(i + 1)));
        heads.push_back(require(pipelines[i], "family", "pipeline document").get<std::string>());
    }
    t.header = {numbers, heads};
    t.blocks.push_back(coefficient_block(cols));

    auto test_block = [&](const std::string& label1, const std::string& label2, const char* key) {
        Row a{label1, {}}, b{label2, {}};
        bool any = false;
        for (const auto& p : pipelines) {
            const json tests = p.value("tests", json::object());
            if (tests.contains(key) && !tests[key].is_null()) {
                any = true;
                a.cells.push_back(fixed(tests[key].at("statistic").get<double>(), 2));
                b.cells.push_back(paren(fixed(tests[key].at("p_value").get<double>(), 3)));
            } else {
                a.cells.emplace_back();
                b.cells.emplace_back();
            }
        }
        if (any) t.blocks.push_back({a, b});
    };
    test_block("Wald test for weak instruments", "  chi2 (p-value)", "weak_instruments");
    test_block("Wald chi-square test", "  chi2 (p-value)", "model_wald");

    {
        Row a{"LR test for alpha=0", {}}, b{"  (p-value)", {}};
        bool any = false;
        for (std::size_t i = 0; i < pipelines.size(); ++i) {
            const json tests = pipelines[i].value("tests", json::object());
            const auto log_alpha = estimate_of(*fits[i], "log_alpha");
            if (tests.contains("dispersion_lr") && log_alpha) {
                any = true;
                const bool truncated = pipelines[i]["family"] == "ztnb";
                a.cells.push_back(truncated ? "log alpha=" + fixed(*log_alpha, 3) : "alpha=" + fixed(std::exp(*log_alpha), 3));
                b.cells.push_back(paren(fixed(tests["dispersion_lr"].at("p_value").get<double>(), 3)));
            } else {
                a.cells.emplace_back();
                b.cells.emplace_back();
            }
        }
        if (any) t.blocks.push_back({a, b});
    }
    if (psm) {
        const double ate = require(*psm, "ate", "psm document").get<double>();
        const double p = require(*psm, "p_value", "psm document").get<double>();
        const std::string cell = format_estimate_p(ate, p);
        const auto split = cell.find(' ');
        t.blocks.push_back({Row{"PSM technique", {cell.substr(0, split)}}, Row{"  ATE (p-value)", {cell.substr(split + 1)}}});
    }
    t.blocks.push_back(count_block(fits));
    t.note = kNotePipeline;
    return render_table(t);
}

namespace {

std::string render_experiment(const json& doc) {
    const json& strategies = require(doc, "strategies", "experiment document");
    std::vector<std::string> ids;
    for (const auto& [id, _] : strategies.items()) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    const bool has_psm = doc.contains("psm") && doc["psm"].is_object();

    Table t;
    t.title = "Monte Carlo summary over " + std::to_string(require(doc, "replications", "experiment document").get<long long>()) +
              " replications (" + std::to_string(doc.value("failures", 0LL)) + " failed)";
    std::vector<std::string> numbers, heads;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        numbers.push_back(paren(std::to_string(i + 1)));
        heads.push_back(ids[i]);
    }
    if (has_psm) {
        numbers.push_back(paren(std::to_string(ids.size() + 1)));
        heads.emplace_back("psm");
    }
    t.header = {numbers, heads};

    auto cell = [](const json& block, const char* key) -> std::string {
        if (!block.contains(key) || block[key].is_null()) return "";
        return fixed(block[key].get<double>(), 3);
    };
    auto row = [&](const std::string& label, const char* key, bool psm_too) {
        Row r{label, {}};
        for (const auto& id : ids) r.cells.push_back(cell(strategies[id], key));
        if (has_psm) r.cells.push_back(psm_too ? cell(doc["psm"], key) : "");
        return r;
    };
    t.blocks.push_back({row("Mean bias of treatment coefficient", "mean_bias", false),
                        row("RMSE", "rmse", false),
                        row("95% CI coverage", "coverage", false)});
    {
        Row r = row("Mean bias of treatment effect", "mean_implied_effect_bias", false);
        if (has_psm) r.cells.back() = cell(doc["psm"], "mean_bias");
        Row rm = Row{"RMSE of treatment effect", std::vector<std::string>(ids.size())};
        Row cv = Row{"Coverage of treatment effect", std::vector<std::string>(ids.size())};
        if (has_psm) {
            rm.cells.push_back(cell(doc["psm"], "rmse"));
            cv.cells.push_back(cell(doc["psm"], "coverage"));
        }
        t.blocks.push_back({r, rm, cv, row("Matching further from oracle", "psm_further_from_oracle", false)});
    }
    t.blocks.push_back({row("Rejection rate: xi", "rejection_xi", false), row("Rejection rate: T*xi", "rejection_t_xi", false),
                        row("Rejection rate: xi_s", "rejection_xi_s", false)});
    {
        std::vector<Row> block;
        const json tests = doc.value("tests", json::object());
        for (const auto& [key, label] : {std::pair{"dispersion_lr_rejection", "Dispersion LR rejection rate"},
                                          std::pair{"stability_rejection", "Stability test rejection rate"}})
            if (tests.contains(key) && !tests[key].is_null()) block.push_back(Row{label, {fixed(tests[key].get<double>(), 3)}});
        const json oracle = doc.value("oracle", json::object());
        for (const auto& [key, label] : {std::pair{"ate_overall", "Oracle ATE (all rows)"},
                                          std::pair{"ate_selected", "Oracle ATE (selected rows)"},
                                          std::pair{"upsilon", "Oracle upsilon"}})
            if (oracle.contains(key) && !oracle[key].is_null()) block.push_back(Row{label, {fixed(oracle[key].get<double>(), 3)}});
        if (!block.empty()) t.blocks.push_back(std::move(block));
    }
    t.note = "Bias and coverage of strategy columns refer to the treatment coefficient; effect rows compare with the oracle ATE on selected rows.";
    return render_table(t);
}

}  // namespace

std::string render_table5(const std::vector<json>& docs) {
    const auto experiments = of_kind(docs, "experiment");
    if (!experiments.empty()) {
        if (docs.size() != 1) throw ReportError("table5 takes a single experiment document");
        return render_experiment(experiments.front());
    }
    std::vector<json> pipelines;
    for (const auto& d : docs) {
        if (kind_of(d) != "pipeline") throw ReportError("table5 expects pipeline or experiment documents, got '" + kind_of(d) + "'");
        pipelines.push_back(d);
    }
    std::stable_sort(pipelines.begin(), pipelines.end(), [](const json& a, const json& b) {
        return a.value("strategy", std::string()) < b.value("strategy", std::string());
    });
    for (std::size_t i = 1; i < pipelines.size(); ++i)
        if (pipelines[i].value("strategy", "") == pipelines[i - 1].value("strategy", ""))
            throw ReportError("table5 got strategy " + pipelines[i].value("strategy", std::string("?")) + " twice");

    Table t;
    t.title = "Incidence rate ratios by estimation strategy";
    std::vector<Column> cols;
    std::vector<const json*> fits;
    std::vector<std::string> numbers, heads;
    for (std::size_t i = 0; i < pipelines.size(); ++i) {
        cols.push_back(irr_column(pipelines[i]));
        fits.push_back(&pipelines[i]["stages"]["main"]);
        numbers.push_back(paren(std::to_string(i + 1)));
        heads.push_back(require(pipelines[i], "strategy", "pipeline document").get<std::string>());
    }
    t.header = {numbers, heads};
    t.blocks.push_back(coefficient_block(cols));
    t.blocks.push_back(count_block(fits));
    t.note = kNotePipeline;
    return render_table(t);
}

std::string render(TableStyle style, const std::vector<json>& docs) {
    if (docs.empty()) throw ReportError("no documents to render (empty input)");
    for (const auto& d : docs)
        if (d.is_null() || (d.is_object() && d.empty()) || (d.is_array() && d.empty()))
            throw ReportError("empty document");
    try {
        switch (style) {
            case TableStyle::table3: return render_table3(docs);
            case TableStyle::table4: return render_table4(docs);
            case TableStyle::table5: return render_table5(docs);
        }
    } catch (const json::exception& e) {
        throw ReportError(std::string("malformed document: ") + e.what());
    }
    return {};
}

}  // namespace countfx
