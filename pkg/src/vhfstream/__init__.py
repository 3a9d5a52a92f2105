"""Software reproduction of a low-VHF BPSK video link and its BER / PSNR evaluation."""
__version__ = "0.1.0"
