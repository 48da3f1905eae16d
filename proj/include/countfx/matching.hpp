#pragma once

#include "countfx/data.hpp"
#include "countfx/mle.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace countfx {

struct PropensityModel {
    /// Score for every dataset row with complete covariates, missing elsewhere.
    OptColumn scores;
    FitResult fit;
};

/// Treatment model on X over the analytic rows (selection = 1, T observed); scores are
/// evaluated on every row whose covariates are complete. Throws DegenerateSampleError
/// when a treatment class is absent and SeparationError on separation.
PropensityModel estimate_propensity(const PanelDataset& data, BinaryLink link = BinaryLink::probit);

/// Fills each missing score on `rows` (rows with T observed) with the mean score of the k
/// nearest rows of the opposite treatment group, using Euclidean distance on standardized
/// covariates restricted to those observed on the row being imputed. Ties in distance
/// go to the lower row index. Throws DataError when fewer than k candidates exist.
OptColumn impute_propensity(const OptColumn& scores, const PanelDataset& data, std::span<const std::size_t> rows,
                            std::size_t k = 5);

struct MatchPair {
    std::size_t treated;
    std::size_t control;
    double gap;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    /// Treated rows without a usable score.
    std::vector<std::size_t> unmatched;
    double ate = 0.0;
    double se = 0.0;
    double p_value = 1.0;
    std::size_t n_imputed = 0;
    std::optional<FitResult> score_model;

    nlohmann::json to_json() const;
};

/// One-to-one nearest-neighbour matching with replacement on `rows`. Treated rows are
/// visited in ascending order; ties go to the lowest control row. Throws DataError when
/// there is no control with a score.
MatchResult match_nearest(const OptColumn& scores, const PanelDataset& data, std::span<const std::size_t> rows);

/// Mean matched-pair difference in the outcome, with a normal p-value from the sample
/// standard deviation of the differences. Throws DataError with fewer than two pairs.
void estimate_ate(MatchResult& match, const PanelDataset& data);

struct PsmOptions {
    BinaryLink link = BinaryLink::probit;
    std::size_t impute_k = 5;
};

/// Propensity, imputation, matching and ATE on the selection = 1 rows.
MatchResult run_psm(const PanelDataset& data, const PsmOptions& opts = {});

}  // namespace countfx
