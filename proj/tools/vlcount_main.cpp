#include "vlcount/cli/driver.hpp"

int main(int argc, char** argv) { return vlcount::cli::run(argc, argv); }
