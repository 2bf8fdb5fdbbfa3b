# Test suite for genuslab
