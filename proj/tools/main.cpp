#include "glyphfusion/cli.hpp"

int main(int argc, char** argv) { return glyphfusion::run_cli(argc, argv); }
