#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace countfx {

enum class VariableRole {
    outcome,
    covariate,
    treatment,
    instrument,
    selection_indicator,
    cluster_id,
    time_trend,
    time_trend_1,
    person_id,
};

std::string_view to_string(VariableRole role);

/// How a variable is summarised: proportion, mean, or median.
enum class VariableKind { binary, continuous, count };

/// Maps roles onto column names of a delimited file.
///
/// JSON form, keyed by role:
///
///     {"outcome": "los", "treatment": "telecare", "selection_indicator": "included",
///      "cluster_id": "project_id", "person_id": "project_id", "time_trend": "week",
///      "covariate": ["age", "female"], "instrument": ["council_share", "simd_decile"],
///      "time_trend_1": "weeks_before_census", "weeks": 52, "census_week": 52,
///      "kinds": {"simd_decile": "ordinal"}}
///
/// `time_trend_1` is optional; when absent it is derived as census_week - week.
struct Schema {
    std::string outcome;
    std::string treatment;
    std::string selection;
    std::string cluster;
    std::string person_id;
    std::string time_trend;
    std::optional<std::string> time_trend_1;
    std::vector<std::string> covariates;
    std::vector<std::string> instruments;
    int weeks = 52;
    std::optional<int> census_week;
    std::map<std::string, VariableKind> kinds;

    int effective_census_week() const { return census_week.value_or(weeks); }
    /// Throws SchemaError for empty role names or an out-of-range census week.
    void validate() const;

    static Schema from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

using OptColumn = std::vector<std::optional<double>>;

struct NamedColumn {
    std::string name;
    OptColumn values;
};

/// Raw columns handed to PanelDataset::from_columns.
struct PanelColumns {
    std::vector<std::string> person_id;
    std::vector<std::string> cluster;
    std::vector<int> week;
    std::vector<std::optional<std::int64_t>> outcome;
    std::vector<std::optional<int>> treatment;
    std::vector<int> selection;
    std::vector<NamedColumn> covariates;
    std::vector<NamedColumn> instruments;
    /// Empty unless the schema maps time_trend_1 to a column.
    OptColumn trend1;
};

/// Person-week panel. Immutable after construction.
class PanelDataset {
public:
    /// Validates every panel invariant; throws DataError naming the offending (person, week).
    static PanelDataset from_columns(Schema schema, PanelColumns columns);

    std::size_t rows() const { return cols_.week.size(); }
    const Schema& schema() const { return schema_; }
    const PanelColumns& columns() const { return cols_; }

    const std::string& person_id(std::size_t i) const { return cols_.person_id[i]; }
    int week(std::size_t i) const { return cols_.week[i]; }
    std::optional<std::int64_t> outcome(std::size_t i) const { return cols_.outcome[i]; }
    std::optional<int> treatment(std::size_t i) const { return cols_.treatment[i]; }
    int selection(std::size_t i) const { return cols_.selection[i]; }
    double trend1(std::size_t i) const;

    /// Dense cluster codes 0..n_clusters-1 in order of first appearance.
    const std::vector<int>& cluster_codes() const { return cluster_codes_; }
    int n_clusters() const { return n_clusters_; }
    std::size_t n_persons() const;
    std::size_t n_persons(std::span<const std::size_t> rows) const;

    /// Looks a variable up by column name or by the aliases T, I, t, t1.
    std::optional<double> value(std::string_view name, std::size_t row) const;
    bool has_variable(std::string_view name) const;

    PanelDataset filter(std::span<const std::size_t> rows) const;
    std::vector<std::size_t> selected_rows() const;

    friend bool operator==(const PanelDataset& a, const PanelDataset& b);

private:
    PanelDataset(Schema schema, PanelColumns cols);
    const OptColumn* find_column(std::string_view name) const;

    Schema schema_;
    PanelColumns cols_;
    std::vector<int> cluster_codes_;
    int n_clusters_ = 0;
};

struct RowIssue {
    std::size_t line;
    std::string message;
};

struct IngestResult {
    PanelDataset data;
    /// Rows whose required fields did not parse; never silently dropped.
    std::vector<RowIssue> rejected;
};

/// Reads comma-separated text with a header row. Quoted fields and doubled quotes are
/// supported; empty fields are missing values.
IngestResult ingest_table(std::istream& in, const Schema& schema);
IngestResult ingest_file(const std::string& path, const Schema& schema);

/// Writes the dataset in the layout ingest_table reads back.
void emit_table(const PanelDataset& data, std::ostream& out);

/// Splits one CSV record. Throws DataError on an unterminated quote.
std::vector<std::string> split_csv_record(std::string_view line);

// ---------------------------------------------------------------------------
// Design matrices

/// Product of one or more variables; a single factor is the variable itself.
struct Term {
    std::vector<std::string> factors;

    static Term var(std::string name) { return Term{{std::move(name)}}; }
    static Term square(const std::string& name) { return Term{{name, name}}; }
    static Term product(std::string a, std::string b) { return Term{{std::move(a), std::move(b)}}; }
    /// "age", "age^2", "T*xi".
    std::string name() const;
};

struct DroppedColumn {
    std::string name;
    std::string reason;  // "constant" or "collinear"
};

struct DesignMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd x;
    /// Dataset row index for each design row.
    std::vector<std::size_t> rows;
    std::vector<DroppedColumn> dropped;

    Eigen::Index cols() const { return x.cols(); }
    /// -1 when absent.
    Eigen::Index column(std::string_view name) const;
    bool has_column(std::string_view name) const { return column(name) >= 0; }
};

/// Full-length derived columns (e.g. residuals) addressable from terms.
using ColumnMap = std::map<std::string, OptColumn, std::less<>>;
using RowFilter = std::function<bool(std::size_t)>;

inline constexpr const char* kIntercept = "(Intercept)";

/// Builds [1, terms...] over rows passing `filter` with every referenced value present.
/// Constant columns are dropped, then columns that are linearly dependent on the columns
/// to their left (relative tolerance 1e-10).
DesignMatrix build_design(const PanelDataset& data, const std::vector<Term>& terms, const RowFilter& filter,
                          const ColumnMap& extra = {});

/// Same, on an explicit row list.
DesignMatrix build_design_on_rows(const PanelDataset& data, const std::vector<Term>& terms,
                                  std::span<const std::size_t> rows, const ColumnMap& extra = {});

/// Prepends the intercept to `columns` (aligned to `rows`) and drops constant and
/// linearly dependent columns left to right, as build_design does.
DesignMatrix make_design(std::vector<std::string> names, const Eigen::MatrixXd& columns, std::vector<std::size_t> rows);

// ---------------------------------------------------------------------------
// Descriptive statistics

struct VariableSummary {
    std::string name;
    VariableKind kind;
    std::size_t n;
    /// Proportion (binary), mean (continuous) or median (count/ordinal).
    double m;
};

struct SummaryBlock {
    std::vector<VariableSummary> variables;
    std::size_t n_rows = 0;
    std::size_t n_persons = 0;
};

struct DescriptiveTable {
    SummaryBlock population;
    SummaryBlock sample;  // selection = 1
};

SummaryBlock describe_rows(const PanelDataset& data, std::span<const std::size_t> rows);
DescriptiveTable describe(const PanelDataset& data);
std::string render_descriptives(const DescriptiveTable& table);
nlohmann::json to_json(const DescriptiveTable& table);

double median(std::vector<double> values);

}  // namespace countfx
