from .base import *
from .toolkit import *
