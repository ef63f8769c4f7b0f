// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/cli.hpp"

int main(int argc, char** argv) { return dpgp::run_cli(argc, argv); }
