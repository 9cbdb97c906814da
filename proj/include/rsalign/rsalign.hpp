#pragma once

#include "rsalign/assembly.hpp"
#include "rsalign/box2caption.hpp"
#include "rsalign/classify.hpp"
#include "rsalign/contrastive.hpp"
#include "rsalign/counting.hpp"
#include "rsalign/dedup.hpp"
#include "rsalign/emb_io.hpp"
#include "rsalign/error.hpp"
#include "rsalign/image_io.hpp"
#include "rsalign/jsonl.hpp"
#include "rsalign/mask2box.hpp"
#include "rsalign/matrix.hpp"
#include "rsalign/parallel.hpp"
#include "rsalign/phash.hpp"
#include "rsalign/probe.hpp"
#include "rsalign/retrieval.hpp"
#include "rsalign/rng.hpp"
#include "rsalign/text.hpp"
#include "rsalign/toy_train.hpp"
