#pragma once

#include <string>
#include <vector>

namespace vmp {

// A header plus rows of string cells. Numbers go through fmt_number so the
// same double always prints the same 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    CsvTable& row(std::vector<std::string> cells);
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }
    std::string str() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string fmt_number(double v);
std::string fmt_bool(bool b);

// Write to path via a sibling temp file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace vmp
