#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tp {

// Occupation/task/work-activity taxonomy. Tasks belong to exactly one
// occupation; work activities (DWAs) are shared across tasks.
struct Taxonomy {
    struct Occupation {
        std::string code;
        std::string title;
        std::optional<double> exposure;  // fraction of DWAs LLMs can assist
    };

    std::vector<Occupation> occupations;  // sorted by code
    std::map<std::string, int> occupation_index;

    std::vector<std::string> dwa_ids;  // sorted
    std::map<std::string, int> dwa_index;

    struct Task {
        std::string id;
        int occupation = -1;
        std::vector<int> dwas;
    };
    std::vector<Task> tasks;
    std::map<std::string, int> task_index;

    // D_o: union of the DWA sets of the occupation's tasks, sorted, deduped.
    std::vector<int> dwa_profile(const std::string& occupation_code) const;
    std::vector<int> dwa_profile(int occupation_idx) const;
};

// CSV schemas (header row required):
//   occupations.csv: code,title[,exposure]
//   tasks.csv:       task_id,occupation_code
//   dwa_links.csv:   task_id,dwa_id
Taxonomy load_taxonomy(const std::string& occupations_csv, const std::string& tasks_csv,
                       const std::string& dwa_links_csv);

// agents_dwa.csv: agent_id,dwa_id (one pair per row). Validates every DWA
// against `known` when non-null.
struct AgentProfile {
    std::string agent_id;
    std::vector<std::string> dwas;  // sorted, deduped
};
std::vector<AgentProfile> load_agent_profiles(const std::string& agents_dwa_csv,
                                              const std::map<std::string, int>* known);

}  // namespace tp
