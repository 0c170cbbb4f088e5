#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace kelab {

struct CriterionResult {
    std::string id;
    std::string title;
    bool passed = false;
    std::string summary;
    std::vector<std::pair<std::string, std::string>> details;
    double seconds = 0.0;
    double budget_seconds = 0.0;
};

// "A1" … "A10"
const std::vector<std::string>& acceptance_ids();

// Unknown ids throw ValidationError. Exceptions inside a criterion become a failed result.
CriterionResult run_criterion(const std::string& id);
std::vector<CriterionResult> run_acceptance(const std::vector<std::string>& ids,
                                            const std::function<void(const CriterionResult&)>& on_result = {});

// One line: "A1 PASS <summary> [12.3 s]".
std::string result_line(const CriterionResult& r);
std::string acceptance_json(const std::vector<CriterionResult>& results);

}  // namespace kelab
