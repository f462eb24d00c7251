#include <iostream>

#include "tempheno/cohort.hpp"
#include "tempheno/early_warning.hpp"
#include "tempheno/imputation.hpp"
#include "tempheno/io.hpp"
#include "tempheno/post_cluster.hpp"
#include "tempheno/soft_cluster.hpp"
#include "tempheno/synth.hpp"

int main() {
    std::cout << "tempheno: pipeline wiring pending\n";
    return 0;
}
