# Config package for multipde
