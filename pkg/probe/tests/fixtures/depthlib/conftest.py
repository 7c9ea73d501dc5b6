# rootdir anchor for pytest
