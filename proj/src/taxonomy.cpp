#include "taxonomy.hpp"

#include <algorithm>
#include <set>

#include "csv.hpp"
#include "util.hpp"

namespace tp {

std::vector<int> Taxonomy::dwa_profile(const std::string& code) const {
    auto it = occupation_index.find(code);
    if (it == occupation_index.end())
        fail(TP_E_INVALID, "UnknownOccupation: '" + code + "'");
    return dwa_profile(it->second);
}

std::vector<int> Taxonomy::dwa_profile(int occupation_idx) const {
    std::set<int> acc;
    for (const auto& t : tasks)
        if (t.occupation == occupation_idx) acc.insert(t.dwas.begin(), t.dwas.end());
    return {acc.begin(), acc.end()};
}

Taxonomy load_taxonomy(const std::string& occupations_csv, const std::string& tasks_csv,
                       const std::string& dwa_links_csv) {
    Taxonomy tax;

    CsvTable occ = read_csv(occupations_csv);
    int c_code = occ.column("code"), c_title = occ.column("title"), c_exp = occ.column("exposure");
    if (c_code < 0 || c_title < 0)
        fail(TP_E_SCHEMA, occupations_csv + ": header must contain code,title[,exposure]");
    for (const auto& row : occ.rows) {
        Taxonomy::Occupation o;
        o.code = trim(row.at(size_t(c_code)));
        o.title = row.at(size_t(c_title));
        if (o.code.empty()) fail(TP_E_SCHEMA, occupations_csv + ": empty occupation code");
        if (c_exp >= 0 && size_t(c_exp) < row.size() && !trim(row[size_t(c_exp)]).empty()) {
            try {
                o.exposure = std::stod(row[size_t(c_exp)]);
            } catch (...) {
                fail(TP_E_SCHEMA, occupations_csv + ": bad exposure for " + o.code);
            }
        }
        tax.occupations.push_back(std::move(o));
    }
    std::sort(tax.occupations.begin(), tax.occupations.end(),
              [](const auto& a, const auto& b) { return a.code < b.code; });
    for (size_t i = 0; i < tax.occupations.size(); ++i) {
        if (!tax.occupation_index.emplace(tax.occupations[i].code, int(i)).second)
            fail(TP_E_SCHEMA, "DuplicateCode: occupation '" + tax.occupations[i].code +
                                  "' appears more than once");
    }

    CsvTable tsk = read_csv(tasks_csv);
    int t_id = tsk.column("task_id"), t_occ = tsk.column("occupation_code");
    if (t_id < 0 || t_occ < 0)
        fail(TP_E_SCHEMA, tasks_csv + ": header must contain task_id,occupation_code");
    for (const auto& row : tsk.rows) {
        Taxonomy::Task t;
        t.id = trim(row.at(size_t(t_id)));
        std::string oc = trim(row.at(size_t(t_occ)));
        auto it = tax.occupation_index.find(oc);
        if (it == tax.occupation_index.end())
            fail(TP_E_SCHEMA, "DanglingReference: task '" + t.id +
                                  "' names unknown occupation '" + oc + "'");
        t.occupation = it->second;
        if (!tax.task_index.emplace(t.id, int(tax.tasks.size())).second)
            fail(TP_E_SCHEMA, "DuplicateCode: task '" + t.id + "' appears more than once");
        tax.tasks.push_back(std::move(t));
    }

    CsvTable lnk = read_csv(dwa_links_csv);
    int l_task = lnk.column("task_id"), l_dwa = lnk.column("dwa_id");
    if (l_task < 0 || l_dwa < 0)
        fail(TP_E_SCHEMA, dwa_links_csv + ": header must contain task_id,dwa_id");
    std::set<std::string> dwa_set;
    for (const auto& row : lnk.rows) dwa_set.insert(trim(row.at(size_t(l_dwa))));
    tax.dwa_ids.assign(dwa_set.begin(), dwa_set.end());
    for (size_t i = 0; i < tax.dwa_ids.size(); ++i) tax.dwa_index[tax.dwa_ids[i]] = int(i);
    for (const auto& row : lnk.rows) {
        std::string ti = trim(row.at(size_t(l_task)));
        auto it = tax.task_index.find(ti);
        if (it == tax.task_index.end())
            fail(TP_E_SCHEMA, "DanglingReference: link names unknown task '" + ti + "'");
        tax.tasks[size_t(it->second)].dwas.push_back(tax.dwa_index.at(trim(row.at(size_t(l_dwa)))));
    }
    for (auto& t : tax.tasks) {
        std::sort(t.dwas.begin(), t.dwas.end());
        t.dwas.erase(std::unique(t.dwas.begin(), t.dwas.end()), t.dwas.end());
    }
    return tax;
}

std::vector<AgentProfile> load_agent_profiles(const std::string& agents_dwa_csv,
                                              const std::map<std::string, int>* known) {
    CsvTable tab = read_csv(agents_dwa_csv);
    int c_agent = tab.column("agent_id"), c_dwa = tab.column("dwa_id");
    if (c_agent < 0 || c_dwa < 0)
        fail(TP_E_SCHEMA, agents_dwa_csv + ": header must contain agent_id,dwa_id");
    std::map<std::string, std::set<std::string>> acc;
    std::vector<std::string> order;  // first-seen agent order
    for (const auto& row : tab.rows) {
        std::string agent = trim(row.at(size_t(c_agent)));
        std::string dwa = trim(row.at(size_t(c_dwa)));
        if (agent.empty() || dwa.empty())
            fail(TP_E_SCHEMA, agents_dwa_csv + ": empty agent_id or dwa_id");
        if (known && !known->count(dwa))
            fail(TP_E_SCHEMA, "DanglingReference: agent '" + agent + "' names work activity '" +
                                  dwa + "' that no loaded task references");
        if (!acc.count(agent)) order.push_back(agent);
        acc[agent].insert(dwa);
    }
    std::vector<AgentProfile> out;
    for (const auto& a : order) {
        AgentProfile p;
        p.agent_id = a;
        p.dwas.assign(acc[a].begin(), acc[a].end());
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace tp
