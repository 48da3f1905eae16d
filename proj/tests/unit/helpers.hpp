#pragma once

#include "countfx/data.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>

namespace countfx::testing {

// pid, week, y, treat, sel, x, z
inline Schema tiny_schema(std::vector<std::string> covariates = {"x"}, std::vector<std::string> instruments = {"z"}) {
    Schema s;
    s.outcome = "y";
    s.treatment = "treat";
    s.selection = "sel";
    s.cluster = "pid";
    s.person_id = "pid";
    s.time_trend = "week";
    s.covariates = std::move(covariates);
    s.instruments = std::move(instruments);
    s.weeks = 52;
    return s;
}

inline IngestResult ingest_text(const std::string& text, const Schema& schema) {
    std::istringstream in(text);
    return ingest_table(in, schema);
}

inline PanelDataset panel_from_text(const std::string& text, const Schema& schema) {
    return ingest_text(text, schema).data;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace countfx::testing
