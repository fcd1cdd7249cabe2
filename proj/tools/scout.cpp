#include "scout/app.hpp"

int main(int argc, char** argv) { return scout::app::run(argc, argv); }
