#pragma once

#include <string>
#include <vector>

namespace tp {

// Minimal RFC-4180-ish CSV: comma separated, double quotes escape fields that
// contain commas/quotes/newlines. Lines starting with '#' are comments.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

}  // namespace tp
