#pragma once

#include <string>
#include <vector>

#include "designs.hpp"
#include "population.hpp"

namespace atsd {

// Tiny populations small enough for exhaustive enumeration of every design.
struct Fixture {
    std::string name;
    Population pop;
    AtsdParams params;
    double beta = 0.7;  // fixed regression coefficient for exact checks
};

inline std::vector<Fixture> tiny_fixtures() {
    std::vector<Fixture> out;
    {
        Population pop = make_population({{0, 0, 5, 3, 0}, {1, 0, 0, 0, 2}},  //
                                         {{0, 1, 4, 2, 0}, {2, 0, 0, 1, 1}},  //
                                         {{1, 0, 2, 2, 0}, {0, 1, 0, 0, 3}});
        out.push_back({"F1", pop, AtsdParams::equal(2, 1, 4, 2, 1, Condition{Variable::x, false, 0.0}), 0.7});
    }
    {
        Population pop = make_population({{0, 3, 0, 1}, {2, 0, 0, 6}},  //
                                         {{1, 2, 0, 0}, {1, 0, 1, 4}},  //
                                         {{0, 1, 1, 0}, {2, 1, 0, 3}});
        out.push_back({"F2", pop, AtsdParams::equal(2, 2, 3, 2, 2, Condition{Variable::x, true, 0.0}), 0.7});
    }
    {
        Population pop = make_population({{0, 4, 1, 0}, {0, 0, 0, 2}, {3, 5, 0, 0}},  //
                                         {{0, 3, 1, 1}, {1, 0, 0, 2}, {2, 4, 0, 1}},  //
                                         {{1, 1, 0, 0}, {0, 2, 0, 1}, {1, 3, 1, 0}});
        out.push_back({"F3", pop, AtsdParams::equal(3, 2, 3, 2, 1, Condition{Variable::x, false, 0.0}), 0.7});
    }
    return out;
}

}  // namespace atsd
