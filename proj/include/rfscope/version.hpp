#pragma once

#define RFSCOPE_VERSION "0.1.0"
