#pragma once

#include <string>
#include <vector>

namespace peghole {

// Minimal CSV table: header row + string cells. Numeric cells are written
// with shortest-round-trip formatting so re-emitting a parsed table is
// byte-identical.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const;
    void save(const std::string& path) const;
    static CsvTable parse(const std::string& text);
    static CsvTable load(const std::string& path);
};

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace peghole
