"""Distributed consensus+innovation estimation simulator"""
