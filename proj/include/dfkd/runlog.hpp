#pragma once

// Training run logs: one JSON object per line (header record, one record
// per epoch, footer record). Wall-clock goes here and only here -- nothing
// time-dependent ever reaches a checkpoint or report.

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfkd/errors.hpp"

namespace dfkd {

struct RunLog {
    nlohmann::json header;
    std::vector<nlohmann::json> records;
    nlohmann::json footer;
    std::vector<std::string> warnings;

    void warn(const std::string& msg) { warnings.push_back(msg); }

    void save_jsonl(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw io_error("cannot open '" + path + "' for writing");
        out << nlohmann::json{{"record", "header"}, {"data", header}}.dump() << '\n';
        for (const auto& w : warnings)
            out << nlohmann::json{{"record", "warning"}, {"message", w}}.dump() << '\n';
        for (const auto& r : records) out << nlohmann::json{{"record", "epoch"}, {"data", r}}.dump() << '\n';
        out << nlohmann::json{{"record", "footer"}, {"data", footer}}.dump() << '\n';
        if (!out) throw io_error("short write to '" + path + "'");
    }
};

} // namespace dfkd
