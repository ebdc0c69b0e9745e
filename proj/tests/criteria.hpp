#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace criteria {

struct Options {
    std::string cli;       // docrec executable, needed by the determinism check
    std::string work_dir;  // scratch space
    std::string run_dir;   // cached long training runs (memorization, grid)
    bool quick = false;    // fewer trials, for `docrec selftest --quick`
    std::ostream* log = nullptr;
};

struct Result {
    int id = 0;
    bool pass = false;
    std::string name;
    std::string detail;
    double seconds = 0.0;
};

/// Criteria that finish in minutes.
std::vector<int> fast_criteria();
/// Criteria that train desk-scale models for hours.
std::vector<int> long_criteria();

Result run(int id, const Options& opts);

/// "PASS [3] gradient check (12.3 s): ..." / "FAIL ...".
std::string format(const Result& r);

}  // namespace criteria
