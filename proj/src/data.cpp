#include "countfx/data.hpp"

#include "countfx/errors.hpp"

#include <cstring>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace countfx {

std::string_view to_string(VariableRole role) {
    switch (role) {
        case VariableRole::outcome: return "outcome";
        case VariableRole::covariate: return "covariate";
        case VariableRole::treatment: return "treatment";
        case VariableRole::instrument: return "instrument";
        case VariableRole::selection_indicator: return "selection_indicator";
        case VariableRole::cluster_id: return "cluster_id";
        case VariableRole::time_trend: return "time_trend";
        case VariableRole::time_trend_1: return "time_trend_1";
        case VariableRole::person_id: return "person_id";
    }
    return "unknown";
}

namespace {

VariableKind kind_from_string(const std::string& s) {
    if (s == "binary") return VariableKind::binary;
    if (s == "continuous") return VariableKind::continuous;
    if (s == "count" || s == "ordinal") return VariableKind::count;
    throw SchemaError("unknown variable kind '" + s + "'");
}

std::string_view kind_name(VariableKind k) {
    switch (k) {
        case VariableKind::binary: return "binary";
        case VariableKind::continuous: return "continuous";
        case VariableKind::count: return "count";
    }
    return "continuous";
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

void Schema::validate() const {
    const std::pair<VariableRole, const std::string*> required[] = {
        {VariableRole::outcome, &outcome},         {VariableRole::treatment, &treatment},
        {VariableRole::selection_indicator, &selection}, {VariableRole::cluster_id, &cluster},
        {VariableRole::person_id, &person_id},     {VariableRole::time_trend, &time_trend},
    };
    for (const auto& [role, name] : required) {
        if (name->empty()) throw SchemaError("schema role '" + std::string(to_string(role)) + "' is not mapped");
    }
    if (weeks < 1) throw SchemaError("weeks must be >= 1");
    const int census = effective_census_week();
    if (census < 1 || census > weeks) throw SchemaError("census_week must lie in [1, weeks]");
}

Schema Schema::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw SchemaError("schema document must be an object");
    Schema s;
    auto get = [&](const char* key, std::string& out) {
        if (doc.contains(key)) out = doc.at(key).get<std::string>();
    };
    try {
        get("outcome", s.outcome);
        get("treatment", s.treatment);
        get("selection_indicator", s.selection);
        get("cluster_id", s.cluster);
        get("person_id", s.person_id);
        get("time_trend", s.time_trend);
        if (doc.contains("time_trend_1")) s.time_trend_1 = doc.at("time_trend_1").get<std::string>();
        if (doc.contains("covariate")) s.covariates = doc.at("covariate").get<std::vector<std::string>>();
        if (doc.contains("instrument")) s.instruments = doc.at("instrument").get<std::vector<std::string>>();
        if (doc.contains("weeks")) s.weeks = doc.at("weeks").get<int>();
        if (doc.contains("census_week")) s.census_week = doc.at("census_week").get<int>();
        if (doc.contains("kinds")) {
            for (const auto& [k, v] : doc.at("kinds").items()) s.kinds[k] = kind_from_string(v.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed schema document: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json Schema::to_json() const {
    nlohmann::json doc = {
        {"outcome", outcome},       {"treatment", treatment},   {"selection_indicator", selection},
        {"cluster_id", cluster},    {"person_id", person_id},   {"time_trend", time_trend},
        {"covariate", covariates},  {"instrument", instruments}, {"weeks", weeks},
    };
    if (time_trend_1) doc["time_trend_1"] = *time_trend_1;
    if (census_week) doc["census_week"] = *census_week;
    if (!kinds.empty()) {
        nlohmann::json k = nlohmann::json::object();
        for (const auto& [name, kind] : kinds) k[name] = kind_name(kind);
        doc["kinds"] = k;
    }
    return doc;
}

// ---------------------------------------------------------------------------
// PanelDataset

PanelDataset::PanelDataset(Schema schema, PanelColumns cols) : schema_(std::move(schema)), cols_(std::move(cols)) {
    std::unordered_map<std::string, int> codes;
    cluster_codes_.reserve(cols_.cluster.size());
    for (const auto& c : cols_.cluster) {
        auto [it, inserted] = codes.try_emplace(c, static_cast<int>(codes.size()));
        cluster_codes_.push_back(it->second);
    }
    n_clusters_ = static_cast<int>(codes.size());
}

PanelDataset PanelDataset::from_columns(Schema schema, PanelColumns c) {
    schema.validate();
    const std::size_t n = c.week.size();
    auto check_len = [n](std::size_t len, const std::string& what) {
        if (len != n) throw DataError("column '" + what + "' has " + std::to_string(len) + " rows, expected " + std::to_string(n));
    };
    check_len(c.person_id.size(), schema.person_id);
    check_len(c.cluster.size(), schema.cluster);
    check_len(c.outcome.size(), schema.outcome);
    check_len(c.treatment.size(), schema.treatment);
    check_len(c.selection.size(), schema.selection);
    if (schema.time_trend_1) check_len(c.trend1.size(), *schema.time_trend_1);
    else if (!c.trend1.empty()) throw DataError("time_trend_1 values supplied but the schema does not map the role");

    auto check_names = [&](const std::vector<NamedColumn>& got, const std::vector<std::string>& want, const char* role) {
        if (got.size() != want.size()) throw DataError(std::string(role) + " column count does not match the schema");
        for (std::size_t j = 0; j < got.size(); ++j) {
            if (got[j].name != want[j]) throw DataError(std::string(role) + " column '" + got[j].name + "' does not match schema name '" + want[j] + "'");
            check_len(got[j].values.size(), got[j].name);
        }
    };
    check_names(c.covariates, schema.covariates, "covariate");
    check_names(c.instruments, schema.instruments, "instrument");

    std::set<std::pair<std::string, int>> seen;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string where = "(person " + c.person_id[i] + ", week " + std::to_string(c.week[i]) + ")";
        if (c.week[i] < 1 || c.week[i] > schema.weeks)
            throw DataError("week outside [1, " + std::to_string(schema.weeks) + "] at " + where);
        if (c.selection[i] != 0 && c.selection[i] != 1) throw DataError("selection indicator must be 0 or 1 at " + where);
        if (c.treatment[i] && *c.treatment[i] != 0 && *c.treatment[i] != 1)
            throw DataError("treatment must be 0 or 1 at " + where);
        if (c.selection[i] == 0 && c.outcome[i])
            throw DataError("outcome present where selection = 0 at " + where);
        if (c.selection[i] == 1 && !c.outcome[i])
            throw DataError("outcome missing where selection = 1 at " + where);
        if (c.outcome[i] && *c.outcome[i] < 0) throw DataError("negative outcome at " + where);
        if (!seen.emplace(c.person_id[i], c.week[i]).second) throw DataError("duplicate (person, week) pair " + where);
    }
    return PanelDataset(std::move(schema), std::move(c));
}

double PanelDataset::trend1(std::size_t i) const {
    if (schema_.time_trend_1) {
        const auto& v = cols_.trend1[i];
        return v ? *v : std::nan("");
    }
    return static_cast<double>(schema_.effective_census_week() - cols_.week[i]);
}

std::size_t PanelDataset::n_persons() const {
    return std::unordered_set<std::string>(cols_.person_id.begin(), cols_.person_id.end()).size();
}

std::size_t PanelDataset::n_persons(std::span<const std::size_t> rows) const {
    std::unordered_set<std::string_view> ids;
    for (auto r : rows) ids.insert(cols_.person_id[r]);
    return ids.size();
}

const OptColumn* PanelDataset::find_column(std::string_view name) const {
    for (const auto& c : cols_.covariates)
        if (c.name == name) return &c.values;
    for (const auto& c : cols_.instruments)
        if (c.name == name) return &c.values;
    return nullptr;
}

bool PanelDataset::has_variable(std::string_view name) const {
    if (find_column(name)) return true;
    return name == "T" || name == "I" || name == "t" || name == "t1" || name == schema_.treatment ||
           name == schema_.selection || name == schema_.time_trend || name == schema_.outcome ||
           (schema_.time_trend_1 && name == *schema_.time_trend_1);
}

std::optional<double> PanelDataset::value(std::string_view name, std::size_t row) const {
    if (const OptColumn* col = find_column(name)) return (*col)[row];
    if (name == "T" || name == schema_.treatment) {
        const auto t = cols_.treatment[row];
        return t ? std::optional<double>(*t) : std::nullopt;
    }
    if (name == "I" || name == schema_.selection) return static_cast<double>(cols_.selection[row]);
    if (name == "t" || name == schema_.time_trend) return static_cast<double>(cols_.week[row]);
    if (name == "t1" || (schema_.time_trend_1 && name == *schema_.time_trend_1)) {
        const double v = trend1(row);
        return std::isnan(v) ? std::nullopt : std::optional<double>(v);
    }
    if (name == schema_.outcome) {
        const auto y = cols_.outcome[row];
        return y ? std::optional<double>(static_cast<double>(*y)) : std::nullopt;
    }
    throw SchemaError("unknown variable '" + std::string(name) + "'");
}

PanelDataset PanelDataset::filter(std::span<const std::size_t> rows) const {
    PanelColumns out;
    auto take = [&](const auto& src, auto& dst) {
        dst.reserve(rows.size());
        for (auto r : rows) dst.push_back(src[r]);
    };
    take(cols_.person_id, out.person_id);
    take(cols_.cluster, out.cluster);
    take(cols_.week, out.week);
    take(cols_.outcome, out.outcome);
    take(cols_.treatment, out.treatment);
    take(cols_.selection, out.selection);
    if (!cols_.trend1.empty()) take(cols_.trend1, out.trend1);
    for (const auto& c : cols_.covariates) {
        out.covariates.push_back({c.name, {}});
        take(c.values, out.covariates.back().values);
    }
    for (const auto& c : cols_.instruments) {
        out.instruments.push_back({c.name, {}});
        take(c.values, out.instruments.back().values);
    }
    return PanelDataset(schema_, std::move(out));
}

std::vector<std::size_t> PanelDataset::selected_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < this->rows(); ++i)
        if (cols_.selection[i] == 1) rows.push_back(i);
    return rows;
}

namespace {

bool same_column(const OptColumn& a, const OptColumn& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].has_value() != b[i].has_value()) return false;
        // Bitwise equality for present values so NaN never sneaks in as "equal".
        if (a[i] && std::memcmp(&*a[i], &*b[i], sizeof(double)) != 0) return false;
    }
    return true;
}

bool same_named(const std::vector<NamedColumn>& a, const std::vector<NamedColumn>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j].name != b[j].name || !same_column(a[j].values, b[j].values)) return false;
    return true;
}

}  // namespace

bool operator==(const PanelDataset& a, const PanelDataset& b) {
    const auto& x = a.cols_;
    const auto& y = b.cols_;
    return x.person_id == y.person_id && x.cluster == y.cluster && x.week == y.week && x.outcome == y.outcome &&
           x.treatment == y.treatment && x.selection == y.selection && same_named(x.covariates, y.covariates) &&
           same_named(x.instruments, y.instruments) && same_column(x.trend1, y.trend1);
}

// ---------------------------------------------------------------------------
// Delimited text

std::vector<std::string> split_csv_record(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool field_started_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"' && field.empty() && !field_started_quoted) {
            quoted = true;
            field_started_quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_started_quoted = false;
        } else {
            field.push_back(ch);
        }
    }
    if (quoted) throw DataError("unterminated quoted field");
    fields.push_back(std::move(field));
    return fields;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    out += '"';
    return out;
}

}  // namespace

IngestResult ingest_table(std::istream& in, const Schema& schema) {
    schema.validate();
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("input has no header row");
    const auto header = split_csv_record(line);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < header.size(); ++j) index.emplace(std::string(trim(header[j])), j);

    auto column_of = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw SchemaError("column '" + name + "' named by the schema is missing from the header");
        return it->second;
    };
    const std::size_t c_person = column_of(schema.person_id);
    const std::size_t c_cluster = column_of(schema.cluster);
    const std::size_t c_week = column_of(schema.time_trend);
    const std::size_t c_outcome = column_of(schema.outcome);
    const std::size_t c_treat = column_of(schema.treatment);
    const std::size_t c_sel = column_of(schema.selection);
    std::optional<std::size_t> c_t1;
    if (schema.time_trend_1) c_t1 = column_of(*schema.time_trend_1);
    std::vector<std::size_t> c_cov, c_ins;
    for (const auto& n : schema.covariates) c_cov.push_back(column_of(n));
    for (const auto& n : schema.instruments) c_ins.push_back(column_of(n));

    PanelColumns cols;
    for (const auto& n : schema.covariates) cols.covariates.push_back({n, {}});
    for (const auto& n : schema.instruments) cols.instruments.push_back({n, {}});
    std::vector<RowIssue> rejected;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        std::vector<std::string> f;
        try {
            f = split_csv_record(line);
        } catch (const DataError& e) {
            rejected.push_back({line_no, e.what()});
            continue;
        }
        if (f.size() != header.size()) {
            rejected.push_back({line_no, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size())});
            continue;
        }
        std::string problem;
        auto fail = [&](const std::string& col, const std::string& what) {
            if (problem.empty()) problem = "column '" + col + "': " + what;
        };

        const std::string person(trim(f[c_person]));
        const std::string cluster(trim(f[c_cluster]));
        if (person.empty()) fail(schema.person_id, "missing identifier");
        if (cluster.empty()) fail(schema.cluster, "missing identifier");
        int week = 0;
        if (!parse_number(f[c_week], week)) fail(schema.time_trend, "not an integer");
        int sel = 0;
        if (!parse_number(f[c_sel], sel) || (sel != 0 && sel != 1)) fail(schema.selection, "not 0/1");
        std::optional<std::int64_t> y;
        if (!is_blank(f[c_outcome])) {
            std::int64_t v = 0;
            if (!parse_number(f[c_outcome], v) || v < 0) fail(schema.outcome, "not a nonnegative integer");
            else y = v;
        }
        std::optional<int> t;
        if (!is_blank(f[c_treat])) {
            int v = 0;
            if (!parse_number(f[c_treat], v) || (v != 0 && v != 1)) fail(schema.treatment, "not 0/1");
            else t = v;
        }
        auto read_opt = [&](std::size_t c, const std::string& name) -> std::optional<double> {
            if (is_blank(f[c])) return std::nullopt;
            double v = 0;
            if (!parse_number(f[c], v) || !std::isfinite(v)) {
                fail(name, "not a finite number");
                return std::nullopt;
            }
            return v;
        };
        std::vector<std::optional<double>> cov, ins;
        for (std::size_t j = 0; j < c_cov.size(); ++j) cov.push_back(read_opt(c_cov[j], schema.covariates[j]));
        for (std::size_t j = 0; j < c_ins.size(); ++j) ins.push_back(read_opt(c_ins[j], schema.instruments[j]));
        std::optional<double> t1;
        if (c_t1) t1 = read_opt(*c_t1, *schema.time_trend_1);

        if (!problem.empty()) {
            rejected.push_back({line_no, problem});
            continue;
        }
        cols.person_id.push_back(person);
        cols.cluster.push_back(cluster);
        cols.week.push_back(week);
        cols.outcome.push_back(y);
        cols.treatment.push_back(t);
        cols.selection.push_back(sel);
        for (std::size_t j = 0; j < cov.size(); ++j) cols.covariates[j].values.push_back(cov[j]);
        for (std::size_t j = 0; j < ins.size(); ++j) cols.instruments[j].values.push_back(ins[j]);
        if (c_t1) cols.trend1.push_back(t1);
    }
    return IngestResult{PanelDataset::from_columns(schema, std::move(cols)), std::move(rejected)};
}

IngestResult ingest_file(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open data file '" + path + "'");
    return ingest_table(in, schema);
}

void emit_table(const PanelDataset& data, std::ostream& out) {
    const Schema& s = data.schema();
    const PanelColumns& c = data.columns();
    std::vector<std::string> header{s.person_id};
    const bool separate_cluster = s.cluster != s.person_id;
    if (separate_cluster) header.push_back(s.cluster);
    header.push_back(s.time_trend);
    if (s.time_trend_1) header.push_back(*s.time_trend_1);
    header.push_back(s.outcome);
    header.push_back(s.treatment);
    header.push_back(s.selection);
    for (const auto& n : s.covariates) header.push_back(n);
    for (const auto& n : s.instruments) header.push_back(n);
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << quote_if_needed(header[j]);
    out << '\n';

    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (std::size_t i = 0; i < data.rows(); ++i) {
        out << quote_if_needed(c.person_id[i]);
        if (separate_cluster) out << ',' << quote_if_needed(c.cluster[i]);
        out << ',' << c.week[i];
        if (s.time_trend_1) out << ',' << opt(c.trend1[i]);
        out << ',';
        if (c.outcome[i]) out << *c.outcome[i];
        out << ',';
        if (c.treatment[i]) out << *c.treatment[i];
        out << ',' << c.selection[i];
        for (const auto& col : c.covariates) out << ',' << opt(col.values[i]);
        for (const auto& col : c.instruments) out << ',' << opt(col.values[i]);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Design matrices

std::string Term::name() const {
    if (factors.size() == 2 && factors[0] == factors[1]) return factors[0] + "^2";
    std::string out;
    for (std::size_t j = 0; j < factors.size(); ++j) out += (j ? "*" : "") + factors[j];
    return out;
}

Eigen::Index DesignMatrix::column(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return static_cast<Eigen::Index>(j);
    return -1;
}

DesignMatrix make_design(std::vector<std::string> names, const Eigen::MatrixXd& columns, std::vector<std::size_t> rows) {
    if (rows.empty() || columns.rows() == 0) throw DegenerateSampleError("no rows remain after filtering for the design");
    if (static_cast<std::size_t>(columns.rows()) != rows.size() || static_cast<std::size_t>(columns.cols()) != names.size())
        throw DataError("design columns do not match their names and rows");
    const Eigen::Index n = columns.rows();
    DesignMatrix out;
    out.rows = std::move(rows);
    std::vector<Eigen::Index> keep;
    out.names.push_back(kIntercept);
    // Orthonormal basis of kept columns, grown by modified Gram-Schmidt with one
    // re-orthogonalization pass.
    Eigen::MatrixXd basis(n, columns.cols() + 1);
    basis.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    Eigen::Index rank = 1;
    for (Eigen::Index j = 0; j < columns.cols(); ++j) {
        const auto col = columns.col(j);
        std::string& name = names[static_cast<std::size_t>(j)];
        if (col.maxCoeff() == col.minCoeff()) {
            out.dropped.push_back({name, "constant"});
            continue;
        }
        Eigen::VectorXd v = col;
        const double norm0 = v.norm();
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index k = 0; k < rank; ++k) v -= basis.col(k).dot(v) * basis.col(k);
        }
        const double resid = v.norm();
        if (!(resid > 1e-10 * norm0)) {
            out.dropped.push_back({name, "collinear"});
            continue;
        }
        basis.col(rank++) = v / resid;
        keep.push_back(j);
        out.names.push_back(std::move(name));
    }
    out.x.resize(n, static_cast<Eigen::Index>(keep.size() + 1));
    out.x.col(0).setOnes();
    for (std::size_t k = 0; k < keep.size(); ++k) out.x.col(static_cast<Eigen::Index>(k + 1)) = columns.col(keep[k]);
    return out;
}

namespace {

OptColumn materialize(const PanelDataset& data, const std::string& name, const ColumnMap& extra) {
    if (auto it = extra.find(name); it != extra.end()) {
        if (it->second.size() != data.rows()) throw SchemaError("derived column '" + name + "' has the wrong length");
        return it->second;
    }
    if (!data.has_variable(name)) throw SchemaError("unknown variable '" + name + "' referenced by a design term");
    OptColumn out(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) out[i] = data.value(name, i);
    return out;
}

DesignMatrix assemble(const PanelDataset& data, const std::vector<Term>& terms, std::vector<std::size_t> rows,
                      const std::vector<OptColumn>& factor_cols, const std::vector<std::vector<std::size_t>>& term_factors) {
    if (rows.empty()) throw DegenerateSampleError("no rows remain after filtering for the design");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd full(n, static_cast<Eigen::Index>(terms.size() + 1));
    full.col(0).setOnes();
    for (std::size_t t = 0; t < terms.size(); ++t) {
        for (Eigen::Index r = 0; r < n; ++r) {
            double v = 1.0;
            for (auto f : term_factors[t]) v *= *factor_cols[f][rows[r]];
            full(r, static_cast<Eigen::Index>(t + 1)) = v;
        }
    }

    std::vector<std::string> names;
    for (const auto& t : terms) names.push_back(t.name());
    (void)data;
    return make_design(std::move(names), full.rightCols(full.cols() - 1), std::move(rows));
}

struct ResolvedTerms {
    std::vector<OptColumn> factor_cols;
    std::vector<std::vector<std::size_t>> term_factors;
};

ResolvedTerms resolve_terms(const PanelDataset& data, const std::vector<Term>& terms, const ColumnMap& extra) {
    ResolvedTerms r;
    std::map<std::string, std::size_t> slot;
    for (const auto& term : terms) {
        if (term.factors.empty()) throw SchemaError("design term with no factors");
        std::vector<std::size_t> idx;
        for (const auto& f : term.factors) {
            auto [it, inserted] = slot.try_emplace(f, r.factor_cols.size());
            if (inserted) r.factor_cols.push_back(materialize(data, f, extra));
            idx.push_back(it->second);
        }
        r.term_factors.push_back(std::move(idx));
    }
    return r;
}

bool complete(const ResolvedTerms& r, std::size_t row) {
    for (const auto& c : r.factor_cols)
        if (!c[row]) return false;
    return true;
}

}  // namespace

DesignMatrix build_design(const PanelDataset& data, const std::vector<Term>& terms, const RowFilter& filter,
                          const ColumnMap& extra) {
    const ResolvedTerms r = resolve_terms(data, terms, extra);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.rows(); ++i)
        if ((!filter || filter(i)) && complete(r, i)) rows.push_back(i);
    return assemble(data, terms, std::move(rows), r.factor_cols, r.term_factors);
}

DesignMatrix build_design_on_rows(const PanelDataset& data, const std::vector<Term>& terms,
                                  std::span<const std::size_t> rows, const ColumnMap& extra) {
    const ResolvedTerms r = resolve_terms(data, terms, extra);
    std::vector<std::size_t> kept;
    for (auto i : rows)
        if (complete(r, i)) kept.push_back(i);
    return assemble(data, terms, std::move(kept), r.factor_cols, r.term_factors);
}

// ---------------------------------------------------------------------------
// Descriptive statistics

double median(std::vector<double> values) {
    if (values.empty()) return std::nan("");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

namespace {

struct DescribedVariable {
    std::string name;
    std::optional<VariableKind> fixed_kind;
};

std::vector<DescribedVariable> described_variables(const Schema& s) {
    std::vector<DescribedVariable> out;
    for (const auto& c : s.covariates) out.push_back({c, std::nullopt});
    out.push_back({s.treatment, VariableKind::binary});
    for (const auto& c : s.instruments) out.push_back({c, std::nullopt});
    out.push_back({s.outcome, VariableKind::count});
    out.push_back({s.time_trend, VariableKind::count});
    out.push_back({s.time_trend_1.value_or("t1"), VariableKind::count});
    return out;
}

}  // namespace

SummaryBlock describe_rows(const PanelDataset& data, std::span<const std::size_t> rows) {
    const Schema& s = data.schema();
    SummaryBlock block;
    block.n_rows = rows.size();
    block.n_persons = data.n_persons(rows);
    for (const auto& var : described_variables(s)) {
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (auto r : rows)
            if (auto v = data.value(var.name, r)) vals.push_back(*v);
        VariableKind kind = VariableKind::continuous;
        if (auto it = s.kinds.find(var.name); it != s.kinds.end()) kind = it->second;
        else if (var.fixed_kind) kind = *var.fixed_kind;
        else if (!vals.empty() && std::all_of(vals.begin(), vals.end(), [](double v) { return v == 0.0 || v == 1.0; }))
            kind = VariableKind::binary;
        double m = std::nan("");
        if (!vals.empty()) {
            if (kind == VariableKind::count) {
                m = median(vals);
            } else {
                double sum = 0.0;
                for (double v : vals) sum += v;
                m = sum / static_cast<double>(vals.size());
            }
        }
        block.variables.push_back({var.name, kind, vals.size(), m});
    }
    return block;
}

DescriptiveTable describe(const PanelDataset& data) {
    std::vector<std::size_t> all(data.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto sel = data.selected_rows();
    return {describe_rows(data, all), describe_rows(data, sel)};
}

namespace {

std::string fmt_stat(double v, int prec) {
    if (std::isnan(v)) return ".";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

}  // namespace

std::string render_descriptives(const DescriptiveTable& table) {
    std::size_t width = std::string("Number of persons").size();
    for (const auto& v : table.population.variables) width = std::max(width, v.name.size());
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %21s  %21s\n", static_cast<int>(width), "", "Study population", "Study sample");
    out << buf;
    std::snprintf(buf, sizeof buf, "%-*s  %10s %10s  %10s %10s\n", static_cast<int>(width), "", "n", "m", "n", "m");
    out << buf;
    out << std::string(width + 48, '-') << '\n';
    for (std::size_t j = 0; j < table.population.variables.size(); ++j) {
        const auto& p = table.population.variables[j];
        const auto& s = table.sample.variables[j];
        const int prec = p.kind == VariableKind::binary ? 2 : (p.kind == VariableKind::count ? 2 : 1);
        std::snprintf(buf, sizeof buf, "%-*s  %10zu %10s  %10zu %10s\n", static_cast<int>(width), p.name.c_str(), p.n,
                      fmt_stat(p.m, prec).c_str(), s.n, fmt_stat(s.m, prec).c_str());
        out << buf;
    }
    out << std::string(width + 48, '-') << '\n';
    std::snprintf(buf, sizeof buf, "%-*s  %10zu %10s  %10zu %10s\n", static_cast<int>(width), "Number of persons",
                  table.population.n_persons, "", table.sample.n_persons, "");
    out << buf;
    return out.str();
}

nlohmann::json to_json(const DescriptiveTable& table) {
    auto block = [](const SummaryBlock& b) {
        nlohmann::json vars = nlohmann::json::array();
        for (const auto& v : b.variables)
            vars.push_back({{"name", v.name}, {"kind", kind_name(v.kind)}, {"n", v.n}, {"m", std::isnan(v.m) ? nlohmann::json() : nlohmann::json(v.m)}});
        return nlohmann::json{{"n_rows", b.n_rows}, {"n_persons", b.n_persons}, {"variables", vars}};
    };
    return {{"population", block(table.population)}, {"sample", block(table.sample)}};
}

}  // namespace countfx
