from .base import Facet, TransformPlugin
from .pipeline import CATALOG, check_composition, compose, resolve, run_pipeline

bilr = CATALOG["bilr"]
stack_pad = CATALOG["stack_pad"]
global_shuffle = CATALOG["global_shuffle"]
heap_pad = CATALOG["heap_pad"]
canary = CATALOG["canary"]
indirect_to_direct = CATALOG["indirect_to_direct"]
cfi_check = CATALOG["cfi_check"]
