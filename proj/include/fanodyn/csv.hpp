// csv.hpp - RFC-4180 writer with round-trip double formatting

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fanodyn/util.hpp"

namespace fanodyn {

class CsvWriter {
public:
    CsvWriter(const std::string& path, std::vector<std::string> header, int precision = 0)
        : out_(path, std::ios::binary), precision_(precision), columns_(header.size()) {
        if (!out_) throw std::runtime_error("cannot open output file: " + path);
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << "\r\n";
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_)
            throw std::logic_error("CsvWriter: column count mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << util::format_double(values[i], precision_);
        }
        out_ << "\r\n";
    }

    void close() { out_.close(); }

private:
    std::ofstream out_;
    int precision_;
    std::size_t columns_;
};

} // namespace fanodyn
